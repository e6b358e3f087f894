"""Agent-local vector fields and their compact linear-system counterparts.

Each agent ``(i, j)`` keeps three local states: the estimate ``x``, the
average-consensus integrator ``xi`` and the auxiliary ``z``. The tracking
variable ``y = xi + A_ij x - b_ij`` is never stored; it is recomputed from
the state whenever it is read.

The vector fields below evaluate every agent from its own block and the
states of its graph neighbours only. The compact systems assemble the same
dynamics as one matrix ``Q`` acting on ``col(x_hat, y_hat, z_hat)``. The two
are independent routes to the same derivative and are checked against each
other in the test-suite.

Stacking order: agents are ordered row-major (homogeneous) or
(cluster, member) lexicographically (case 1 and 2); within ``Q`` the
families come in the order x, y, z.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import ShapeError, VariantError
from .numerics import block_diag, least_squares_oracle
from .partitioning import (
    Case1Partition,
    Case2Partition,
    HomogeneousPartition,
    Partition,
    SelectorSet,
    make_case2,
)
from .topology import DoubleLayerNetwork, GridNetwork, Network, laplacian


class InitRule(str, Enum):
    ZERO = "zero"
    SEEDED_UNIFORM = "seeded_uniform"


@dataclass(frozen=True, eq=False)
class Segment:
    key: tuple[int, int]
    x: slice
    y: slice
    A: np.ndarray
    b: np.ndarray


@dataclass(frozen=True, eq=False)
class Layout:
    variant: str
    segments: tuple[Segment, ...]
    x_dim: int
    y_dim: int

    def __len__(self) -> int:
        return len(self.segments)

    def apply_A(self, x: np.ndarray) -> np.ndarray:
        """Per-agent ``A_ij x_ij`` stacked in y coordinates."""
        out = np.empty(self.y_dim)
        for seg in self.segments:
            out[seg.y] = seg.A @ x[seg.x]
        return out

    def b_stack(self) -> np.ndarray:
        out = np.empty(self.y_dim)
        for seg in self.segments:
            out[seg.y] = seg.b
        return out

    def residual(self, x: np.ndarray) -> np.ndarray:
        return self.apply_A(x) - self.b_stack()


def layout_for(p: Partition) -> Layout:
    segs, xo, yo = [], 0, 0
    for blk in p.agent_blocks():
        dy, dx = blk.A.shape
        segs.append(Segment(blk.key, slice(xo, xo + dx), slice(yo, yo + dy), blk.A, blk.b))
        xo += dx
        yo += dy
    return Layout(p.variant, tuple(segs), xo, yo)


@dataclass(frozen=True, eq=False)
class SwarmState:
    """Stacked agent states; also used for time derivatives of a state."""

    layout: Layout
    x: np.ndarray
    xi: np.ndarray
    z: np.ndarray

    @property
    def variant(self) -> str:
        return self.layout.variant

    def y(self) -> np.ndarray:
        return self.xi + self.layout.residual(self.x)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x, self.xi, self.z])

    def from_flat(self, v: np.ndarray) -> "SwarmState":
        nx, ny = self.layout.x_dim, self.layout.y_dim
        return SwarmState(self.layout, v[:nx].copy(), v[nx : nx + ny].copy(), v[nx + ny :].copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    def __add__(self, other: "SwarmState") -> "SwarmState":
        return SwarmState(self.layout, self.x + other.x, self.xi + other.xi, self.z + other.z)

    def __mul__(self, k: float) -> "SwarmState":
        return SwarmState(self.layout, k * self.x, k * self.xi, k * self.z)

    __rmul__ = __mul__


def check_shapes(p: Partition, net: Network) -> None:
    if isinstance(p, HomogeneousPartition):
        if not isinstance(net, GridNetwork):
            raise ShapeError("a homogeneous partition needs a grid network")
        if (net.m, net.n) != (p.m, p.n):
            raise ShapeError(f"grid is {net.m}x{net.n} but the partition is {p.m}x{p.n}")
    elif isinstance(p, (Case1Partition, Case2Partition)):
        if not isinstance(net, DoubleLayerNetwork):
            raise ShapeError(f"a {p.variant} partition needs a double-layered network")
        if net.cluster_sizes != p.cluster_sizes:
            raise ShapeError(
                f"network cluster sizes {list(net.cluster_sizes)} do not match "
                f"partition cluster sizes {list(p.cluster_sizes)}"
            )
    else:
        raise VariantError(f"unknown partition type {type(p).__name__}")


def init_state(
    p: Partition,
    net: Network,
    x0_rule: InitRule | str = InitRule.ZERO,
    z0_rule: InitRule | str = InitRule.ZERO,
    seed: int = 0,
) -> SwarmState:
    """Initial swarm state; ``xi`` always starts at zero.

    ``SEEDED_UNIFORM`` draws from U[-1, 1] with independent child streams
    for x and z, so changing one rule does not shift the other's draws.
    """
    check_shapes(p, net)
    layout = layout_for(p)
    rng_x, rng_z = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))

    def draw(rule, rng):
        rule = InitRule(rule)
        if rule is InitRule.ZERO:
            return np.zeros(layout.x_dim)
        return rng.uniform(-1.0, 1.0, layout.x_dim)

    return SwarmState(layout, draw(x0_rule, rng_x), np.zeros(layout.y_dim), draw(z0_rule, rng_z))


def _require(s: SwarmState, p: Partition, variant: str) -> None:
    if s.variant != variant or p.variant != variant:
        raise VariantError(f"expected a {variant} state and partition, got {s.variant}/{p.variant}")


def _cluster_ranges(p: Partition, family: str) -> list[slice]:
    """Contiguous x or y range of every cluster in the stacked vectors."""
    ranges, start = [], 0
    for i in range(p.c):
        dims = [blk.A.shape[1] if family == "x" else blk.A.shape[0] for blk in p.agent_blocks() if blk.key[0] == i]
        ranges.append(slice(start, start + sum(dims)))
        start += sum(dims)
    return ranges


def _check_selectors(sel: Sequence[SelectorSet], expected: Sequence[Sequence[int]]) -> None:
    if len(sel) != len(expected) or any(tuple(s.dims) != tuple(e) for s, e in zip(sel, expected)):
        raise ShapeError("selector sets do not match the partition")


def hom_field(s: SwarmState, p: HomogeneousPartition, net: GridNetwork) -> SwarmState:
    _require(s, p, "hom")
    m, n = p.m, p.n
    X = s.x.reshape(m, n)
    Z = s.z.reshape(m, n)
    Y = s.y().reshape(m, n)
    dx = np.empty((m, n))
    dxi = np.empty((m, n))
    dz = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            col_nbrs = net.col_graphs[j].neighbors(i)
            psi = sum(Z[i, j] - Z[k, j] for k in col_nbrs)
            phi = sum(X[i, j] - X[k, j] for k in col_nbrs)
            grad = p.A[i, j] * Y[i, j]
            dx[i, j] = -(grad - psi) - phi
            dxi[i, j] = -sum(Y[i, j] - Y[i, k] for k in net.row_graphs[i].neighbors(j))
            dz[i, j] = grad - psi
    return SwarmState(s.layout, dx.ravel(), dxi.ravel(), dz.ravel())


def case1_field(
    s: SwarmState,
    p: Case1Partition,
    net: DoubleLayerNetwork,
    sel: Sequence[SelectorSet] | None = None,
) -> SwarmState:
    """Column-block clusters: x and z agree inside a cluster, y across clusters.

    Neighbouring clusters hand over their full stacked y (in R^m); the
    selector ``E_ij`` picks the rows that agent ``(i, j)`` is responsible for.
    """
    _require(s, p, "case1")
    sel = p.selector_sets() if sel is None else sel
    _check_selectors(sel, p.row_heights)
    y = s.y()
    y_cluster = [y[r] for r in _cluster_ranges(p, "y")]
    dx, dxi, dz = np.empty_like(s.x), np.empty_like(s.xi), np.empty_like(s.z)
    segs = {seg.key: seg for seg in s.layout.segments}
    for seg in s.layout.segments:
        i, j = seg.key
        x_ij, z_ij, y_ij = s.x[seg.x], s.z[seg.x], y[seg.y]
        intra = [segs[(i, k)] for k in net.intra_graphs[i].neighbors(j)]
        psi = sum((z_ij - s.z[o.x] for o in intra), np.zeros_like(z_ij))
        phi = sum((x_ij - s.x[o.x] for o in intra), np.zeros_like(x_ij))
        grad = seg.A.T @ y_ij
        E = sel[i].matrices[j]
        dx[seg.x] = -(grad - psi) - phi
        dxi[seg.y] = -sum(
            (y_ij - E @ y_cluster[k] for k in net.cluster_graph.neighbors(i)), np.zeros_like(y_ij)
        )
        dz[seg.x] = grad - psi
    return SwarmState(s.layout, dx, dxi, dz)


def case2_field(
    s: SwarmState,
    p: Case2Partition,
    net: DoubleLayerNetwork,
    sel: Sequence[SelectorSet] | None = None,
    gain: float | Sequence[float] | None = None,
) -> SwarmState:
    """Row-block clusters: y agrees inside a cluster, x and z across clusters.

    The local gradient term is scaled by the cluster size ``c_i``. ``gain``
    overrides that scale (one value for all clusters or one per cluster);
    with equal cluster sizes the scale can be dropped entirely.
    """
    _require(s, p, "case2")
    sel = p.selector_sets() if sel is None else sel
    _check_selectors(sel, p.col_widths)
    gains = _gains(p, gain)
    y = s.y()
    x_ranges = _cluster_ranges(p, "x")
    x_cluster = [s.x[r] for r in x_ranges]
    z_cluster = [s.z[r] for r in x_ranges]
    dx, dxi, dz = np.empty_like(s.x), np.empty_like(s.xi), np.empty_like(s.z)
    segs = {seg.key: seg for seg in s.layout.segments}
    for seg in s.layout.segments:
        i, j = seg.key
        x_ij, z_ij, y_ij = s.x[seg.x], s.z[seg.x], y[seg.y]
        E = sel[i].matrices[j]
        clusters = net.cluster_graph.neighbors(i)
        psi = sum((z_ij - E @ z_cluster[k] for k in clusters), np.zeros_like(z_ij))
        phi = sum((x_ij - E @ x_cluster[k] for k in clusters), np.zeros_like(x_ij))
        grad = gains[i] * (seg.A.T @ y_ij)
        dx[seg.x] = -(grad - psi) - phi
        dxi[seg.y] = -sum(
            (y_ij - y[segs[(i, k)].y] for k in net.intra_graphs[i].neighbors(j)), np.zeros_like(y_ij)
        )
        dz[seg.x] = grad - psi
    return SwarmState(s.layout, dx, dxi, dz)


def _gains(p: Case2Partition, gain) -> np.ndarray:
    if gain is None:
        return np.asarray(p.cluster_sizes, dtype=float)
    g = np.broadcast_to(np.asarray(gain, dtype=float), (p.c,))
    return g.copy()


def make_field(p: Partition, net: Network, **kwargs) -> Callable[[SwarmState], SwarmState]:
    check_shapes(p, net)
    if isinstance(p, HomogeneousPartition):
        return lambda s: hom_field(s, p, net)
    if isinstance(p, Case1Partition):
        return lambda s: case1_field(s, p, net, **kwargs)
    return lambda s: case2_field(s, p, net, **kwargs)


@dataclass(frozen=True, eq=False)
class CompactSystem:
    """``d/dt col(x_hat, y_hat, z_hat) = Q col(x_hat, y_hat, z_hat)``.

    ``Q`` has the block form

        [[-L,    -G,          L  ],
         [-A L,  -(L_y + A G), A L],
         [ 0,     G,          -L  ]]

    where ``L`` is the Laplacian acting on x and z, ``L_y`` the one acting on
    y, ``A`` the block-diagonal stack of agent blocks and ``G`` the coupling
    of y into x (``A^T``, or ``Gamma A^T`` for case 2).
    """

    variant: str
    Q: np.ndarray
    L_xz: np.ndarray
    L_y: np.ndarray
    A_hat: np.ndarray
    G: np.ndarray
    stacking_order: tuple[tuple[str, tuple[int, int], int, int], ...]
    perm: np.ndarray | None = None
    gamma: np.ndarray | None = None

    @property
    def x_dim(self) -> int:
        return self.L_xz.shape[0]

    @property
    def y_dim(self) -> int:
        return self.L_y.shape[0]


def _assemble(L: np.ndarray, L_y: np.ndarray, A_hat: np.ndarray, G: np.ndarray) -> np.ndarray:
    AL = A_hat @ L
    return np.block(
        [
            [-L, -G, L],
            [-AL, -(L_y + A_hat @ G), AL],
            [np.zeros_like(L), G, -L],
        ]
    )


def _stacking(layout: Layout) -> tuple:
    nx, ny = layout.x_dim, layout.y_dim
    out = [("x", s.key, s.x.start, s.x.stop) for s in layout.segments]
    out += [("y", s.key, nx + s.y.start, nx + s.y.stop) for s in layout.segments]
    out += [("z", s.key, nx + ny + s.x.start, nx + ny + s.x.stop) for s in layout.segments]
    return tuple(out)


def column_major_order(m: int, n: int) -> np.ndarray:
    """Index map of the permutation taking row-major agent order to column-major.

    ``(P v)[k] == v[order[k]]``; P itself is never materialised here.
    """
    return np.array([i * n + j for j in range(n) for i in range(m)])


def compact_hom(p: HomogeneousPartition, net: GridNetwork) -> CompactSystem:
    check_shapes(p, net)
    m, n = p.m, p.n
    A_hat = np.diag(p.A.ravel())
    L_R = block_diag([laplacian(g) for g in net.row_graphs])
    L_c = block_diag([laplacian(g) for g in net.col_graphs])
    order = column_major_order(m, n)
    inv = np.argsort(order)
    L_tilde = L_c[np.ix_(inv, inv)]
    Q = _assemble(L_tilde, L_R, A_hat, A_hat.T)
    return CompactSystem("hom", Q, L_tilde, L_R, A_hat, A_hat.T, _stacking(layout_for(p)), perm=order)


def _cluster_A(p: Case1Partition | Case2Partition) -> list[np.ndarray]:
    return [block_diag(list(row)) for row in p.blocks]


def compact_case1(p: Case1Partition, net: DoubleLayerNetwork) -> CompactSystem:
    check_shapes(p, net)
    A_hat = block_diag(_cluster_A(p))
    L_hat = block_diag([np.kron(laplacian(g), np.eye(w)) for g, w in zip(net.intra_graphs, p.col_widths)])
    L_G = np.kron(laplacian(net.cluster_graph), np.eye(p.m))
    Q = _assemble(L_hat, L_G, A_hat, A_hat.T)
    return CompactSystem("case1", Q, L_hat, L_G, A_hat, A_hat.T, _stacking(layout_for(p)))


def compact_case2(p: Case2Partition, net: DoubleLayerNetwork, gain=None) -> CompactSystem:
    check_shapes(p, net)
    A_hat = block_diag(_cluster_A(p))
    L_hat = block_diag([np.kron(laplacian(g), np.eye(h)) for g, h in zip(net.intra_graphs, p.row_heights)])
    L_G = np.kron(laplacian(net.cluster_graph), np.eye(p.n))
    gamma = np.repeat(_gains(p, gain), p.n)
    G = gamma[:, None] * A_hat.T
    Q = _assemble(L_G, L_hat, A_hat, G)
    return CompactSystem("case2", Q, L_G, L_hat, A_hat, G, _stacking(layout_for(p)), gamma=gamma)


def compact_system(p: Partition, net: Network, **kwargs) -> CompactSystem:
    if isinstance(p, HomogeneousPartition):
        return compact_hom(p, net)
    if isinstance(p, Case1Partition):
        return compact_case1(p, net)
    return compact_case2(p, net, **kwargs)


def stack(s: SwarmState) -> np.ndarray:
    return np.concatenate([s.x, s.y(), s.z])


def stack_derivative(ds: SwarmState, s: SwarmState) -> np.ndarray:
    """Map a field output (dx, dxi, dz) to (dx, dy, dz); ``dy = dxi + A dx``."""
    return np.concatenate([ds.x, ds.xi + s.layout.apply_A(ds.x), ds.z])


def state_from_stack(v: np.ndarray, layout: Layout) -> SwarmState:
    nx, ny = layout.x_dim, layout.y_dim
    x, y, z = v[:nx], v[nx : nx + ny], v[nx + ny :]
    return SwarmState(layout, x.copy(), y - layout.residual(x), z.copy())


def equilibrium_stack(p: Partition, net: Network, x_ls: np.ndarray | None = None) -> np.ndarray:
    """An equilibrium of Q built from a least-squares solution.

    x copies the solution into every agent, y holds the averaged residual
    each agent tracks at steady state, and z solves ``L z = G y``.
    """
    eta = least_squares_oracle(p.A, p.b) if x_ls is None else np.asarray(x_ls, dtype=float)
    r = p.A @ eta - p.b
    cs = compact_system(p, net)
    if isinstance(p, HomogeneousPartition):
        x = np.tile(eta, p.m)
        y = np.repeat(r / p.n, p.n)
    elif isinstance(p, Case1Partition):
        co = p.col_offsets
        x = np.concatenate([
            np.tile(eta[co[i] : co[i + 1]], size) for i, size in enumerate(p.cluster_sizes)
        ])
        y = np.tile(r / p.c, p.c)
    else:
        ro = p.row_offsets
        x = np.tile(eta, p.c)
        y = np.concatenate([
            np.tile(r[ro[i] : ro[i + 1]] / size, size) for i, size in enumerate(p.cluster_sizes)
        ])
    z, *_ = np.linalg.lstsq(cs.L_xz, cs.G @ y, rcond=None)
    return np.concatenate([x, y, z])


def case2_from_homogeneous(
    p: HomogeneousPartition, net: GridNetwork
) -> tuple[Case2Partition, DoubleLayerNetwork]:
    """Recast a scalar-block grid as a row-block double-layer system.

    Matrix row i becomes cluster i with one member per column; the row
    graphs become the intra-cluster graphs and the (shared) column graph
    becomes the cluster graph. Agent order and state layout coincide with
    the homogeneous ones, so states can be passed between the two as-is.
    With unit gain the case-2 field then equals the homogeneous field.
    """
    check_shapes(p, net)
    cluster = net.col_graphs[0]
    if any(g.edges != cluster.edges for g in net.col_graphs[1:]):
        raise ShapeError("all column graphs must coincide to act as one cluster graph")
    shares = [list(row[:, None]) for row in p.b_split]
    q = make_case2(p.A, p.b, [1] * p.m, [[1] * p.n for _ in range(p.m)], "custom", shares)
    return q, DoubleLayerNetwork(cluster, tuple(net.row_graphs))
