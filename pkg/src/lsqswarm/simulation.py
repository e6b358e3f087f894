"""Fixed-step RK4 integration of the swarm and the metrics recorded along a run.

The vector fields are affine in the flat state ``(x, xi, z)``, so one RK4
step is an affine map ``v -> R v + r``. :func:`rk4_propagator` tabulates
that map once by pushing basis vectors through :func:`rk4_step`; the run
then advances ``record_every`` steps at a time with the composed map.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, TypeVar

import numpy as np

from .dynamics import (
    InitRule,
    SwarmState,
    check_shapes,
    compact_system,
    init_state,
    make_field,
    stack,
)
from .errors import DivergenceError, InsufficientDecay, InvalidInputError, NumericalError
from .numerics import block_diag, least_squares_oracle, numerical_rank
from .partitioning import Case1Partition, HomogeneousPartition, Partition
from .topology import Network, assert_assumptions

DIVERGENCE_NORM = 1e12
E_FLOOR = 1e-13
CONSECUTIVE = 10
# h * spectral_radius stays below the RK4 real-axis stability limit (~2.5) with 4x margin
STEP_BOUND = 2.5 / 4

S = TypeVar("S", SwarmState, np.ndarray)


class Classification(str, Enum):
    EXACT = "Exact"
    LEAST_SQUARES_ONLY = "LeastSquaresOnly"
    NOT_CONVERGED = "NotConverged"


def _check_finite(k, stage: int, h: float) -> None:
    v = k.flat() if isinstance(k, SwarmState) else np.asarray(k)
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite derivative in RK4 stage {stage} (h={h:g})")


def rk4_step(field: Callable[[S], S], s: S, h: float) -> S:
    """One classical fourth-order Runge-Kutta step."""
    if h <= 0:
        raise InvalidInputError("step size must be positive")
    k1 = field(s)
    _check_finite(k1, 1, h)
    k2 = field(s + (h / 2) * k1)
    _check_finite(k2, 2, h)
    k3 = field(s + (h / 2) * k2)
    _check_finite(k3, 3, h)
    k4 = field(s + h * k3)
    _check_finite(k4, 4, h)
    return s + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def rk4_propagator(field: Callable[[SwarmState], SwarmState], template: SwarmState, h: float):
    """Return ``(R, r)`` with ``rk4_step(field, s, h).flat() == R @ s.flat() + r``.

    Only valid for fields that are affine in the state, which all three
    consensus fields are.
    """
    dim = template.flat().size
    zero = template.from_flat(np.zeros(dim))
    r = rk4_step(field, zero, h).flat()
    R = np.empty((dim, dim))
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = 1.0
        R[:, k] = rk4_step(field, zero.from_flat(e), h).flat() - r
    return R, r


def _compose(R: np.ndarray, r: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    dim = r.size
    aug = np.zeros((dim + 1, dim + 1))
    aug[:dim, :dim] = R
    aug[:dim, dim] = r
    aug[dim, dim] = 1.0
    aug = np.linalg.matrix_power(aug, k)
    return aug[:dim, :dim], aug[:dim, dim]


def copy_matrix(p: Partition) -> np.ndarray:
    """Linear map taking a global solution to the agents' consensus copies of it."""
    if isinstance(p, HomogeneousPartition):
        return np.tile(np.eye(p.n), (p.m, 1))
    if isinstance(p, Case1Partition):
        co = p.col_offsets
        eye = np.eye(p.n)
        return np.vstack([eye[co[i] : co[i + 1]] for i, size in enumerate(p.cluster_sizes) for _ in range(size)])
    return np.tile(np.eye(p.n), (p.c, 1))


def conservation_matrix(p: Partition) -> np.ndarray:
    """Sums y over the groups in which it runs average consensus.

    Rows of the homogeneous grid, all clusters at once for case 1, members
    of each cluster for case 2. Applied to ``y - (A x - b)`` it returns the
    summed ``xi``, which stays zero when ``xi(0) = 0``.
    """
    if isinstance(p, HomogeneousPartition):
        return np.kron(np.eye(p.m), np.ones((1, p.n)))
    if isinstance(p, Case1Partition):
        return np.kron(np.ones((1, p.c)), np.eye(p.m))
    return block_diag([np.kron(np.ones((1, size)), np.eye(h)) for size, h in zip(p.cluster_sizes, p.row_heights)])


def conservation_drift(s: SwarmState, p: Partition) -> float:
    """``|| sum y - sum (A x - b) ||`` over the variant's consensus groups."""
    S_ = conservation_matrix(p)
    return float(np.linalg.norm(S_ @ s.y() - S_ @ s.layout.residual(s.x)))


def consensus_projection(s: SwarmState, p: Partition, C: np.ndarray | None = None) -> np.ndarray:
    """Average the agents' copies of each unknown into one global estimate."""
    C = copy_matrix(p) if C is None else C
    return (C.T @ s.x) / C.sum(axis=0)


@dataclass
class SimConfig:
    partition: Partition
    network: Network
    x0_rule: InitRule | str = InitRule.ZERO
    z0_rule: InitRule | str = InitRule.ZERO
    seed: int = 0
    h: float = 1e-3
    t_end: float = 200.0
    record_every: int = 100
    tol_converge: float = 1e-6
    tol_exact: float = 1e-8
    stop_early: bool = True
    auto_step: bool = True

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidInputError("h must be positive")
        if not self.t_end >= self.h:
            raise InvalidInputError("t_end must be at least h")
        if self.record_every < 1:
            raise InvalidInputError("record_every must be a positive integer")
        if not (self.tol_converge > 0 and self.tol_exact > 0):
            raise InvalidInputError("tolerances must be positive")
        check_shapes(self.partition, self.network)

    @property
    def variant(self) -> str:
        return self.partition.variant


@dataclass(frozen=True, eq=False)
class RunRecord:
    times: np.ndarray
    E: np.ndarray
    Ye: np.ndarray
    grad_norm: np.ndarray
    disagreement: np.ndarray
    conservation_drift: np.ndarray
    stationarity: np.ndarray
    final_x: np.ndarray
    final_state: SwarmState
    classification: Classification
    rate_estimate: float | None
    reference_x: np.ndarray
    reference_kind: str
    h: float
    steps: int
    converged: bool
    extras: dict = field(default_factory=dict)

    CSV_COLUMNS = ("t", "E", "Ye", "grad_norm", "disagreement", "conservation_drift")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_COLUMNS)
            cols = [self.times, self.E, self.Ye, self.grad_norm, self.disagreement, self.conservation_drift]
            for row in zip(*cols):
                w.writerow([f"{v:.17g}" for v in row])


def spectral_radius(Q: np.ndarray) -> float:
    return float(np.abs(np.linalg.eigvals(Q)).max()) if Q.size else 0.0


def simulate(cfg: SimConfig) -> RunRecord:
    p, net = cfg.partition, cfg.network
    assert_assumptions(net)
    s0 = init_state(p, net, cfg.x0_rule, cfg.z0_rule, cfg.seed)
    cs = compact_system(p, net)

    h = cfg.h
    if cfg.auto_step:
        rho = spectral_radius(cs.Q)
        while h * rho >= STEP_BOUND:
            h /= 2

    field_fn = make_field(p, net)
    R, r = rk4_propagator(field_fn, s0, h)
    K = cfg.record_every
    total_steps = max(1, int(round(cfg.t_end / h)))
    block = _compose(R, r, K)

    C = copy_matrix(p)
    S_ = conservation_matrix(p)
    A, b = p.A, p.b
    layout = s0.layout

    times, xs, ye, grad, dis, drift, stat = [], [], [], [], [], [], []

    def record(t: float, state: SwarmState) -> bool:
        y = state.y()
        x_bar = (C.T @ state.x) / C.sum(axis=0)
        times.append(t)
        xs.append(state.x.copy())
        ye.append(float(y @ y))
        grad.append(float(np.linalg.norm(A.T @ (A @ x_bar - b))))
        dis.append(float(np.linalg.norm(state.x - C @ x_bar)))
        drift.append(float(np.linalg.norm(S_ @ y - S_ @ layout.residual(state.x))))
        stat.append(float(np.linalg.norm(cs.Q @ stack(state))))
        tol = cfg.tol_converge
        return grad[-1] < tol and dis[-1] < tol

    def settled() -> bool:
        return ok and stat[-1] < cfg.tol_converge

    v = s0.flat()
    state = s0
    ok = record(0.0, s0)
    streak = 1 if settled() else 0
    done = 0
    while done < total_steps:
        k = min(K, total_steps - done)
        RK, rK = block if k == K else _compose(R, r, k)
        v = RK @ v + rK
        done += k
        norm = float(np.linalg.norm(v))
        if not math.isfinite(norm) or norm > DIVERGENCE_NORM:
            raise DivergenceError(h, done * h, norm)
        state = s0.from_flat(v)
        ok = record(done * h, state)
        # early stop also waits for y and z to settle, not just x
        streak = streak + 1 if settled() else 0
        if cfg.stop_early and streak >= CONSECUTIVE:
            break

    x_final = (C.T @ state.x) / C.sum(axis=0)
    if numerical_rank(A) == A.shape[1]:
        x_ref, ref_kind = least_squares_oracle(A, b), "oracle"
    else:
        x_ref, ref_kind = x_final, "final_consensus"
    copies = C @ x_ref
    E = np.array([float(np.sum((x - copies) ** 2)) for x in xs])

    if not ok:
        cls = Classification.NOT_CONVERGED
    elif ye[-1] < cfg.tol_exact:
        cls = Classification.EXACT
    else:
        cls = Classification.LEAST_SQUARES_ONLY

    times_arr = np.array(times)
    try:
        rate = fit_log_decay(times_arr, E).slope
    except InsufficientDecay:
        rate = None

    return RunRecord(
        times=times_arr,
        E=E,
        Ye=np.array(ye),
        grad_norm=np.array(grad),
        disagreement=np.array(dis),
        conservation_drift=np.array(drift),
        stationarity=np.array(stat),
        final_x=x_final,
        final_state=state,
        classification=cls,
        rate_estimate=rate,
        reference_x=x_ref,
        reference_kind=ref_kind,
        h=h,
        steps=done,
        converged=ok,
    )


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    residual_fraction: float
    start: int
    stop: int


def fit_log_decay(times, E, floor: float = E_FLOOR) -> DecayFit:
    """Least-squares line through log E over the middle 60% of the decay.

    The decaying window runs from the peak of E to the last sample before E
    first falls to ``floor``. ``residual_fraction`` is the RMS fit residual
    divided by the range of log E inside the fitted window.
    """
    t = np.asarray(times, dtype=float)
    E = np.asarray(E, dtype=float)
    if E.size == 0 or not np.any(E < E[0] / 10):
        raise InsufficientDecay("E never drops below a tenth of its initial value")
    peak = int(np.argmax(E))
    below = np.nonzero(E[peak:] <= floor)[0]
    end = peak + (int(below[0]) if below.size else E.size - peak)
    if end - peak < 10:
        raise InsufficientDecay(f"only {end - peak} samples above {floor:g} in the decaying window")
    trim = int(0.2 * (end - peak))
    lo, hi = peak + trim, end - trim
    logE = np.log(E[lo:hi])
    slope, intercept = np.polyfit(t[lo:hi], logE, 1)
    resid = logE - (slope * t[lo:hi] + intercept)
    span = float(logE.max() - logE.min())
    frac = float(np.sqrt(np.mean(resid**2)) / span) if span > 0 else float("inf")
    return DecayFit(float(slope), float(intercept), frac, lo, hi)


def estimate_rate(record: RunRecord) -> float:
    """Exponential rate of E(t): the slope of log E (negative when converging)."""
    return fit_log_decay(record.times, record.E).slope
