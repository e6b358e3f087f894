"""Cutting (A, b) into agent-local blocks.

Three layouts are supported:

* homogeneous: agent ``(i, j)`` owns the scalar ``A[i, j]`` and a share
  ``b_ij`` of ``b[i]``;
* case 1: ``A`` is cut into complete column blocks ``A_i`` (one per
  cluster), each cut into row sub-blocks ``A_ij``; ``b`` is split into
  cluster shares ``b_i`` summing to ``b`` and each ``b_i`` is cut by rows;
* case 2: ``A`` is cut into complete row blocks ``A_i``, each cut into
  column sub-blocks ``A_ij``; ``b_i`` is the matching slice of ``b`` and is
  split into shares ``b_ij`` summing to ``b_i``.

How ``b`` is shared is free as long as the sums reconstruct it, so it is
selected by a named :class:`BRule` and recorded with the partition.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np

from .errors import InvalidSplitError, PartitionShapeError
from .numerics import as_matrix, as_vector, _check_system

SPLIT_TOL = 1e-12


class BRule(str, Enum):
    DIAGONAL = "diagonal"
    UNIFORM = "uniform"
    FIRST_CLUSTER_ALL = "first_cluster_all"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class AgentBlock:
    """What a single agent knows: its block of A and its share of b."""

    key: tuple[int, int]
    A: np.ndarray
    b: np.ndarray


@dataclass(frozen=True, eq=False)
class SelectorSet:
    dims: tuple[int, ...]
    matrices: tuple[np.ndarray, ...]

    @property
    def offsets(self) -> tuple[int, ...]:
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.dims)[:-1]]))

    def slices(self) -> list[slice]:
        return [slice(o, o + d) for o, d in zip(self.offsets, self.dims)]


def selectors(dims: Sequence[int]) -> SelectorSet:
    """Row slices ``E_k`` of the identity with ``col(E_1, ..., E_K) = I``."""
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise PartitionShapeError(f"selector dimensions must be positive, got {dims}")
    eye = np.eye(sum(dims))
    mats, start = [], 0
    for d in dims:
        mats.append(eye[start : start + d].copy())
        start += d
    return SelectorSet(dims, tuple(mats))


def _offsets(sizes: Sequence[int]) -> list[int]:
    return [0, *np.cumsum(sizes).tolist()]


def _check_sizes(sizes: Sequence[int], total: int, field: str) -> tuple[int, ...]:
    sizes = tuple(int(s) for s in sizes)
    if not sizes or any(s < 1 for s in sizes):
        raise PartitionShapeError(f"{field} must be a non-empty list of positive integers, got {sizes}")
    if sum(sizes) != total:
        raise PartitionShapeError(f"{field} {list(sizes)} sums to {sum(sizes)}, expected {total}")
    return sizes


@dataclass(frozen=True, eq=False)
class HomogeneousPartition:
    A: np.ndarray
    b: np.ndarray
    b_split: np.ndarray
    rule: BRule

    variant = "hom"

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def agent_blocks(self) -> list[AgentBlock]:
        """Agents in row-major order."""
        return [
            AgentBlock((i, j), self.A[i : i + 1, j : j + 1].copy(), self.b_split[i, j : j + 1].copy())
            for i in range(self.m)
            for j in range(self.n)
        ]

    def reassemble(self) -> tuple[np.ndarray, np.ndarray]:
        A = np.array([blk.A[0, 0] for blk in self.agent_blocks()]).reshape(self.m, self.n)
        return A, self.b_split.sum(axis=1)


@dataclass(frozen=True, eq=False)
class Case1Partition:
    A: np.ndarray
    b: np.ndarray
    col_widths: tuple[int, ...]
    row_heights: tuple[tuple[int, ...], ...]
    blocks: tuple[tuple[np.ndarray, ...], ...]
    b_cluster: tuple[np.ndarray, ...]
    b_blocks: tuple[tuple[np.ndarray, ...], ...]
    rule: BRule

    variant = "case1"

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def c(self) -> int:
        return len(self.col_widths)

    @property
    def cluster_sizes(self) -> tuple[int, ...]:
        return tuple(len(h) for h in self.row_heights)

    @property
    def col_offsets(self) -> list[int]:
        return _offsets(self.col_widths)

    def selector_sets(self) -> list[SelectorSet]:
        """Per cluster, the row slices of I_m handing each member its rows."""
        return [selectors(h) for h in self.row_heights]

    def agent_blocks(self) -> list[AgentBlock]:
        return [
            AgentBlock((i, j), self.blocks[i][j], self.b_blocks[i][j])
            for i in range(self.c)
            for j in range(len(self.row_heights[i]))
        ]

    def reassemble(self) -> tuple[np.ndarray, np.ndarray]:
        A = np.hstack([np.vstack(col) for col in self.blocks])
        b_i = [np.concatenate(parts) for parts in self.b_blocks]
        return A, np.sum(b_i, axis=0)


@dataclass(frozen=True, eq=False)
class Case2Partition:
    A: np.ndarray
    b: np.ndarray
    row_heights: tuple[int, ...]
    col_widths: tuple[tuple[int, ...], ...]
    blocks: tuple[tuple[np.ndarray, ...], ...]
    b_rows: tuple[np.ndarray, ...]
    b_blocks: tuple[tuple[np.ndarray, ...], ...]
    rule: BRule

    variant = "case2"

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def c(self) -> int:
        return len(self.row_heights)

    @property
    def cluster_sizes(self) -> tuple[int, ...]:
        return tuple(len(w) for w in self.col_widths)

    @property
    def row_offsets(self) -> list[int]:
        return _offsets(self.row_heights)

    def selector_sets(self) -> list[SelectorSet]:
        """Per cluster, the row slices of I_n handing each member its unknowns."""
        return [selectors(w) for w in self.col_widths]

    def agent_blocks(self) -> list[AgentBlock]:
        return [
            AgentBlock((i, j), self.blocks[i][j], self.b_blocks[i][j])
            for i in range(self.c)
            for j in range(len(self.col_widths[i]))
        ]

    def reassemble(self) -> tuple[np.ndarray, np.ndarray]:
        A = np.vstack([np.hstack(row) for row in self.blocks])
        b = np.concatenate([np.sum(parts, axis=0) for parts in self.b_blocks])
        return A, b


Partition = Union[HomogeneousPartition, Case1Partition, Case2Partition]


def _rule(rule: BRule | str) -> BRule:
    try:
        return BRule(rule)
    except ValueError:
        raise InvalidSplitError(f"unknown b rule {rule!r}") from None


def make_homogeneous(A, b, rule: BRule | str = BRule.DIAGONAL, custom=None) -> HomogeneousPartition:
    """Scalar blocks; ``b[i]`` is shared among the n agents of row i.

    ``DIAGONAL`` puts all of ``b[i]`` on agent ``(i, min(i, n-1))``, so rows
    beyond the n-th land in the last column. ``UNIFORM`` gives each agent
    ``b[i] / n``. ``CUSTOM`` takes an explicit m x n split whose rows must
    sum to ``b``.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    _check_system(A, b)
    rule = _rule(rule)
    m, n = A.shape
    if rule is BRule.DIAGONAL:
        split = np.zeros((m, n))
        for i in range(m):
            split[i, min(i, n - 1)] = b[i]
    elif rule is BRule.UNIFORM:
        split = np.repeat(b[:, None] / n, n, axis=1)
    elif rule is BRule.CUSTOM:
        if custom is None:
            raise InvalidSplitError("custom rule needs an explicit split")
        split = as_matrix(custom, "b_split")
        if split.shape != (m, n):
            raise InvalidSplitError(f"custom split has shape {split.shape}, expected {(m, n)}")
    else:
        raise InvalidSplitError(f"rule {rule.value!r} does not apply to a homogeneous partition")
    err = np.abs(split.sum(axis=1) - b).max()
    if err > SPLIT_TOL * max(1.0, np.abs(b).max()):
        raise InvalidSplitError(f"row shares do not sum to b (max error {err:.3g})")
    return HomogeneousPartition(A.copy(), b.copy(), split, rule)


def make_case1(
    A,
    b,
    col_widths: Sequence[int],
    row_heights: Sequence[Sequence[int]],
    rule: BRule | str = BRule.FIRST_CLUSTER_ALL,
    custom=None,
) -> Case1Partition:
    """Complete column blocks, each cut into cluster-specific row sub-blocks.

    ``FIRST_CLUSTER_ALL`` gives ``b_1 = b`` and zero to the other clusters;
    ``UNIFORM`` gives every cluster ``b / c``; ``CUSTOM`` takes a list of c
    vectors summing to ``b``.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    _check_system(A, b)
    rule = _rule(rule)
    m, n = A.shape
    col_widths = _check_sizes(col_widths, n, "col_widths")
    if len(row_heights) != len(col_widths):
        raise PartitionShapeError(
            f"row_heights has {len(row_heights)} clusters, col_widths has {len(col_widths)}"
        )
    heights = tuple(_check_sizes(h, m, f"row_heights[{i}]") for i, h in enumerate(row_heights))
    c = len(col_widths)

    if rule is BRule.FIRST_CLUSTER_ALL:
        b_cluster = [b.copy()] + [np.zeros(m) for _ in range(c - 1)]
    elif rule is BRule.UNIFORM:
        b_cluster = [b / c for _ in range(c)]
    elif rule is BRule.CUSTOM:
        if custom is None or len(custom) != c:
            raise InvalidSplitError(f"custom rule needs {c} cluster shares of b")
        b_cluster = [as_vector(v, f"b_{i}") for i, v in enumerate(custom)]
        if any(v.shape != (m,) for v in b_cluster):
            raise InvalidSplitError(f"every cluster share must have dimension {m}")
    else:
        raise InvalidSplitError(f"rule {rule.value!r} does not apply to a case-1 partition")
    err = np.abs(np.sum(b_cluster, axis=0) - b).max()
    if err > SPLIT_TOL * max(1.0, np.abs(b).max()):
        raise InvalidSplitError(f"cluster shares do not sum to b (max error {err:.3g})")

    co = _offsets(col_widths)
    blocks, b_blocks = [], []
    for i in range(c):
        ro = _offsets(heights[i])
        blocks.append(tuple(A[ro[j] : ro[j + 1], co[i] : co[i + 1]].copy() for j in range(len(heights[i]))))
        b_blocks.append(tuple(b_cluster[i][ro[j] : ro[j + 1]].copy() for j in range(len(heights[i]))))
    return Case1Partition(
        A.copy(), b.copy(), col_widths, heights, tuple(blocks), tuple(b_cluster), tuple(b_blocks), rule
    )


def make_case2(
    A,
    b,
    row_heights: Sequence[int],
    col_widths: Sequence[Sequence[int]],
    rule: BRule | str = BRule.DIAGONAL,
    custom=None,
) -> Case2Partition:
    """Complete row blocks, each cut into cluster-specific column sub-blocks.

    ``DIAGONAL`` gives member i of cluster i (both counted from one) the
    whole ``b_i`` and needs ``c_i >= i``; ``UNIFORM`` gives each member
    ``b_i / c_i``; ``CUSTOM`` takes nested per-member shares.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    _check_system(A, b)
    rule = _rule(rule)
    m, n = A.shape
    row_heights = _check_sizes(row_heights, m, "row_heights")
    if len(col_widths) != len(row_heights):
        raise PartitionShapeError(
            f"col_widths has {len(col_widths)} clusters, row_heights has {len(row_heights)}"
        )
    widths = tuple(_check_sizes(w, n, f"col_widths[{i}]") for i, w in enumerate(col_widths))
    c = len(row_heights)
    ro = _offsets(row_heights)
    b_rows = [b[ro[i] : ro[i + 1]].copy() for i in range(c)]

    b_blocks: list[list[np.ndarray]] = []
    for i in range(c):
        ci, mi = len(widths[i]), row_heights[i]
        if rule is BRule.DIAGONAL:
            if ci < i + 1:
                raise InvalidSplitError(
                    f"diagonal rule needs cluster {i} to have at least {i + 1} members, it has {ci}"
                )
            shares = [np.zeros(mi) for _ in range(ci)]
            shares[i] = b_rows[i].copy()
        elif rule is BRule.UNIFORM:
            shares = [b_rows[i] / ci for _ in range(ci)]
        elif rule is BRule.CUSTOM:
            if custom is None or len(custom) != c or len(custom[i]) != ci:
                raise InvalidSplitError("custom rule needs one share per agent")
            shares = [as_vector(v, f"b_{i}{j}") for j, v in enumerate(custom[i])]
            if any(v.shape != (mi,) for v in shares):
                raise InvalidSplitError(f"shares of cluster {i} must have dimension {mi}")
        else:
            raise InvalidSplitError(f"rule {rule.value!r} does not apply to a case-2 partition")
        err = np.abs(np.sum(shares, axis=0) - b_rows[i]).max()
        if err > SPLIT_TOL * max(1.0, np.abs(b_rows[i]).max()):
            raise InvalidSplitError(f"shares of cluster {i} do not sum to b_{i}")
        b_blocks.append(shares)

    blocks = []
    for i in range(c):
        wo = _offsets(widths[i])
        blocks.append(tuple(A[ro[i] : ro[i + 1], wo[j] : wo[j + 1]].copy() for j in range(len(widths[i]))))
    return Case2Partition(
        A.copy(),
        b.copy(),
        row_heights,
        widths,
        tuple(blocks),
        tuple(b_rows),
        tuple(tuple(s) for s in b_blocks),
        rule,
    )
