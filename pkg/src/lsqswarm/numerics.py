"""Dense linear-algebra substrate.

Matrices and vectors are plain ``numpy`` float arrays; :func:`as_matrix` and
:func:`as_vector` enforce the shape and finiteness invariants at the
boundaries. Besides the least-squares oracle this module carries the
numerical checks used to certify the spectral properties of the consensus
system matrices: every non-zero eigenvalue in the open left half plane and a
non-defective zero eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DimensionError, InvalidInputError, NumericalError, ParseError

TOL_ORACLE = 1e-9
TOL_SPEC = 1e-8
TOL_RANK = 1e-10


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.array(v, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.reshape(-1)
    if arr.ndim != 1 or arr.size < 1:
        raise DimensionError(f"{name} must be a non-empty 1-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


def _check_system(A: np.ndarray, b: np.ndarray) -> None:
    if A.shape[0] != b.shape[0]:
        raise DimensionError(f"A has {A.shape[0]} rows but b has dimension {b.shape[0]}")


def least_squares_oracle(A, b, tol: float = TOL_ORACLE) -> np.ndarray:
    """Minimum-norm minimiser of ``||Ax - b||^2`` (pseudo-inverse applied to b).

    Raises :class:`NumericalError` if the returned point fails the normal
    equation test ``||A^T(Ax-b)|| <= tol * (1 + ||A|| ||b||)``.
    """
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    _check_system(A, b)
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    g = np.linalg.norm(A.T @ (A @ x - b))
    bound = tol * (1.0 + np.linalg.norm(A, 2) * np.linalg.norm(b))
    if g > bound:
        raise NumericalError(f"least-squares solve inaccurate: gradient norm {g:.3g} > {bound:.3g}")
    return x


def residual_gradient(A, b, x) -> np.ndarray:
    """Return ``A^T (A x - b)``; it vanishes exactly at least-squares solutions."""
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    x = as_vector(x, "x")
    _check_system(A, b)
    if A.shape[1] != x.shape[0]:
        raise DimensionError(f"A has {A.shape[1]} columns but x has dimension {x.shape[0]}")
    return A.T @ (A @ x - b)


def numerical_rank(M, tol: float = TOL_RANK) -> int:
    """Number of singular values above ``tol * sigma_max``; the zero matrix has rank 0."""
    if tol <= 0:
        raise InvalidInputError("tol must be positive")
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def consistency_check(A, b, tol: float = TOL_RANK) -> bool:
    """True iff ``b`` lies in the range of ``A`` (rank A == rank [A | b])."""
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    _check_system(A, b)
    return numerical_rank(A, tol) == numerical_rank(np.column_stack([A, b]), tol)


def eigenvalues(M) -> list[complex]:
    M = as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"eigenvalues need a square matrix, got {M.shape}")
    try:
        ev = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue solver did not converge: {exc}") from exc
    return [complex(z) for z in ev]


def _require_psd(L: np.ndarray, name: str, tol: float) -> None:
    scale = max(1.0, float(np.abs(L).max()))
    if not np.allclose(L, L.T, rtol=0.0, atol=tol * scale):
        raise InvalidInputError(f"{name} is not symmetric")
    lam_min = float(np.linalg.eigvalsh((L + L.T) / 2).min())
    if lam_min < -tol * scale * L.shape[0]:
        raise InvalidInputError(f"{name} is not positive semi-definite (min eigenvalue {lam_min:.3g})")


def build_lemma2_matrix(L1, L2, Y, tol: float = 1e-10) -> np.ndarray:
    """Assemble the three-by-three block matrix

        [[-L1,      -Y,          L1   ],
         [-Y^T L1,  -Y^T Y - L2,  Y^T L1],
         [ 0,        Y,          -L1   ]]

    with ``L1`` (p x p) and ``L2`` (q x q) symmetric positive semi-definite
    and ``Y`` a real p x q matrix. All three consensus algorithms reduce to
    this shape (the cluster-size gained variant only up to a diagonal gain).
    """
    L1 = as_matrix(L1, "L1")
    L2 = as_matrix(L2, "L2")
    Y = as_matrix(Y, "Y")
    p, q = Y.shape
    if L1.shape != (p, p) or L2.shape != (q, q):
        raise DimensionError(
            f"incompatible blocks: L1 {L1.shape}, L2 {L2.shape}, Y {Y.shape}"
        )
    _require_psd(L1, "L1", tol)
    _require_psd(L2, "L2", tol)
    YtL1 = Y.T @ L1
    return np.block(
        [
            [-L1, -Y, L1],
            [-YtL1, -(Y.T @ Y) - L2, YtL1],
            [np.zeros((p, p)), Y, -L1],
        ]
    )


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: tuple[complex, ...]
    max_nonzero_real_part: float
    zero_eig_count: int
    rank_M: int
    rank_M_squared: int
    hurwitz_nonzero: bool
    zero_nondefective: bool

    @property
    def ok(self) -> bool:
        return self.hurwitz_nonzero and self.zero_nondefective

    def to_text(self) -> str:
        lines = [
            f"dimension: {len(self.eigenvalues)}",
            f"max_nonzero_real_part: {self.max_nonzero_real_part:.17g}",
            f"zero_eig_count: {self.zero_eig_count}",
            f"rank_M: {self.rank_M}",
            f"rank_M_squared: {self.rank_M_squared}",
            f"hurwitz_nonzero: {str(self.hurwitz_nonzero).lower()}",
            f"zero_nondefective: {str(self.zero_nondefective).lower()}",
            "eigenvalues:",
        ]
        for z in sorted(self.eigenvalues, key=lambda w: (w.real, w.imag)):
            lines.append(f"  {z.real:.17g} {z.imag:+.17g}")
        return "\n".join(lines) + "\n"


def spectral_verify(M, tol_spec: float = TOL_SPEC, rank_tol: float = TOL_RANK) -> SpectralReport:
    """Check that non-zero eigenvalues are strictly stable and zero is non-defective.

    Eigenvalues with ``|lambda| <= tol_spec * ||M||_F`` count as zero. The
    zero eigenvalue is non-defective iff rank(M) == rank(M^2). Since
    range(M^2) = M range(M), rank(M^2) is evaluated as rank(M U_r) with U_r an
    orthonormal basis of range(M); forming M @ M explicitly squares the
    condition number and misreads slow modes as a Jordan block.
    """
    if tol_spec <= 0:
        raise InvalidInputError("tol_spec must be positive")
    M = as_matrix(M, "M")
    ev = eigenvalues(M)
    zero_thresh = tol_spec * np.linalg.norm(M)
    nonzero = [z for z in ev if abs(z) > zero_thresh]
    zero_count = len(ev) - len(nonzero)
    max_re = max((z.real for z in nonzero), default=float("-inf"))

    U, s, _ = np.linalg.svd(M)
    r = int(np.count_nonzero(s > rank_tol * s[0])) if s[0] > 0 else 0
    r2 = numerical_rank(M @ U[:, :r], rank_tol) if r else 0
    return SpectralReport(
        eigenvalues=tuple(ev),
        max_nonzero_real_part=float(max_re),
        zero_eig_count=zero_count,
        rank_M=r,
        rank_M_squared=r2,
        hurwitz_nonzero=bool(max_re < -tol_spec),
        zero_nondefective=r == r2,
    )


# Text format: first line "rows cols", then one whitespace-separated row per line.


def format_matrix(M) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in M]
    return "\n".join(lines) + "\n"


def format_vector(v) -> str:
    return format_matrix(np.asarray(v, dtype=float).reshape(-1, 1))


def parse_matrix(text: str, source: str | None = None) -> np.ndarray:
    rows: list[tuple[int, str]] = [
        (k, ln.split("#", 1)[0].strip()) for k, ln in enumerate(text.splitlines(), start=1)
    ]
    rows = [(k, ln) for k, ln in rows if ln]
    if not rows:
        raise ParseError(None, "empty matrix text", source)
    head_line, head = rows[0]
    parts = head.split()
    try:
        nr, nc = (int(p) for p in parts)
    except ValueError:
        raise ParseError(head_line, f"expected 'rows cols', got {head!r}", source) from None
    if nr < 1 or nc < 1:
        raise ParseError(head_line, "dimensions must be positive", source)
    body = rows[1:]
    if len(body) != nr:
        raise ParseError(head_line, f"header declares {nr} rows but {len(body)} follow", source)
    out = np.empty((nr, nc))
    for r, (line_no, ln) in enumerate(body):
        fields = ln.split()
        if len(fields) != nc:
            raise ParseError(line_no, f"expected {nc} entries, got {len(fields)}", source)
        try:
            out[r] = [float(f) for f in fields]
        except ValueError as exc:
            raise ParseError(line_no, str(exc), source) from None
    if not np.all(np.isfinite(out)):
        raise ParseError(None, "non-finite entry", source)
    return out


def read_matrix(path: str | Path) -> np.ndarray:
    path = Path(path)
    return parse_matrix(path.read_text(), str(path))


def read_vector(path: str | Path) -> np.ndarray:
    M = read_matrix(path)
    if 1 not in M.shape:
        raise ParseError(None, f"expected a column or row vector, got shape {M.shape}", str(path))
    return M.reshape(-1)


def write_matrix(path: str | Path, M) -> None:
    Path(path).write_text(format_matrix(M))


def write_vector(path: str | Path, v) -> None:
    Path(path).write_text(format_vector(v))


def block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Block-diagonal stack that also accepts zero-width blocks."""
    rows = sum(B.shape[0] for B in blocks)
    cols = sum(B.shape[1] for B in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for B in blocks:
        out[r : r + B.shape[0], c : c + B.shape[1]] = B
        r += B.shape[0]
        c += B.shape[1]
    return out
