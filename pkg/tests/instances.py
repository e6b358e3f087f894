"""Seeded random problem instances shared by the test modules."""

from __future__ import annotations

import numpy as np

from lsqswarm.partitioning import make_case1, make_case2, make_homogeneous
from lsqswarm.topology import DoubleLayerNetwork, GridNetwork, erdos_renyi, laplacian

REF_A = np.array([[1.0, 2.0, 1.0], [2.0, -1.0, -1.0], [1.0, -2.0, 4.0], [2.0, 2.0, -2.0]])
REF_B = np.array([3.0, 2.0, 1.0, 2.0])
REF_X = np.array([1.1310, 0.4947, 0.2992])
CASE1_SPLIT = dict(col_widths=[1, 1, 1], row_heights=[[1, 2, 1], [2, 2], [2, 1, 1]])
CASE2_SPLIT = dict(row_heights=[2, 1, 1], col_widths=[[1, 1, 1], [2, 1], [1, 1, 1]])


def composition(rng: np.random.Generator, total: int, parts: int) -> list[int]:
    """Random split of ``total`` into ``parts`` positive integers."""
    cuts = np.sort(rng.choice(np.arange(1, total), size=parts - 1, replace=False)) if parts > 1 else []
    edges = [0, *cuts, total]
    return [int(edges[k + 1] - edges[k]) for k in range(parts)]


def conditioned_matrix(rng: np.random.Generator, m: int, n: int, lo=0.5, hi=2.0) -> np.ndarray:
    """m x n matrix of full rank with singular values in [lo, hi]."""
    U, _ = np.linalg.qr(rng.normal(size=(m, m)))
    V, _ = np.linalg.qr(rng.normal(size=(n, n)))
    S = np.zeros((m, n))
    k = min(m, n)
    S[:k, :k] = np.diag(rng.uniform(lo, hi, k))
    return U @ S @ V.T


def random_graph(rng, k: int, p: float = 0.5):
    return erdos_renyi(k, p, rng)


def random_hom(rng, m: int | None = None, n: int | None = None, A=None, b=None):
    if A is None:
        m = m or int(rng.integers(1, 5))
        n = n or int(rng.integers(1, 5))
        A = rng.normal(size=(m, n))
        b = rng.normal(size=m)
    m, n = A.shape
    p = make_homogeneous(A, b, rng.choice(["diagonal", "uniform"]))
    net = GridNetwork(m, n, tuple(random_graph(rng, n) for _ in range(m)), tuple(random_graph(rng, m) for _ in range(n)))
    return p, net


def random_case1(rng, A=None, b=None):
    if A is None:
        m, n = int(rng.integers(1, 6)), int(rng.integers(1, 5))
        A, b = rng.normal(size=(m, n)), rng.normal(size=m)
    m, n = A.shape
    c = int(rng.integers(1, n + 1))
    widths = composition(rng, n, c)
    heights = [composition(rng, m, int(rng.integers(1, m + 1))) for _ in range(c)]
    p = make_case1(A, b, widths, heights, rng.choice(["first_cluster_all", "uniform"]))
    net = DoubleLayerNetwork(random_graph(rng, c), tuple(random_graph(rng, len(h)) for h in heights))
    return p, net


def random_case2(rng, A=None, b=None):
    if A is None:
        m, n = int(rng.integers(1, 5)), int(rng.integers(1, 6))
        A, b = rng.normal(size=(m, n)), rng.normal(size=m)
    m, n = A.shape
    c = int(rng.integers(1, m + 1))
    heights = composition(rng, m, c)
    widths = [composition(rng, n, int(rng.integers(1, n + 1))) for _ in range(c)]
    p = make_case2(A, b, heights, widths, "uniform")
    net = DoubleLayerNetwork(random_graph(rng, c), tuple(random_graph(rng, len(w)) for w in widths))
    return p, net


RANDOM_INSTANCE = {"hom": random_hom, "case1": random_case1, "case2": random_case2}


def random_psd(rng, k: int) -> np.ndarray:
    """Either a random connected-graph Laplacian or Q^T diag(d) Q with a spectral gap."""
    if rng.random() < 0.5:
        return laplacian(erdos_renyi(k, 0.5, rng))
    Q, _ = np.linalg.qr(rng.normal(size=(k, k)))
    d = rng.uniform(0.5, 3.0, k)
    d[rng.random(k) < 0.3] = 0.0
    return Q.T @ np.diag(d) @ Q


def random_psd_triple(rng):
    p, q = int(rng.integers(1, 7)), int(rng.integers(1, 7))
    return random_psd(rng, p), random_psd(rng, q), rng.uniform(-1.0, 1.0, (p, q))
