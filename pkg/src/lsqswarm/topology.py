"""Undirected communication graphs and the two network shapes.

A :class:`GridNetwork` carries one graph per matrix row (over the n agents of
that row) and one per column (over the m agents of that column). A
:class:`DoubleLayerNetwork` carries a graph over clusters plus one graph
inside each cluster.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import AssumptionViolated, GraphShapeError, ParseError


@dataclass(frozen=True)
class Graph:
    node_count: int
    edges: frozenset[tuple[int, int]]
    _adj: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise GraphShapeError("a graph needs at least one node")
        adj: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        object.__setattr__(self, "_adj", tuple(tuple(sorted(a)) for a in adj))

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self._adj[u]

    def degree(self, u: int) -> int:
        return len(self._adj[u])

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)

    def to_text(self) -> str:
        lines = [f"nodes {self.node_count}"]
        lines += [f"{u} {v}" for u, v in self.sorted_edges()]
        return "\n".join(lines) + "\n"


def graph_from_edges(node_count: int, edges: Iterable[Sequence[int]]) -> Graph:
    """Build an undirected simple graph; duplicate and reversed pairs collapse."""
    if node_count < 1:
        raise GraphShapeError("a graph needs at least one node")
    es: set[tuple[int, int]] = set()
    for e in edges:
        u, v = (int(w) for w in e)
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise GraphShapeError(f"edge ({u}, {v}) has an endpoint outside [0, {node_count})")
        if u == v:
            raise GraphShapeError(f"self-loop at node {u}")
        es.add((min(u, v), max(u, v)))
    return Graph(node_count, frozenset(es))


def path_graph(k: int) -> Graph:
    return graph_from_edges(k, [(i, i + 1) for i in range(k - 1)])


def cycle_graph(k: int) -> Graph:
    if k < 3:
        return path_graph(k)
    return graph_from_edges(k, [(i, (i + 1) % k) for i in range(k)])


def complete_graph(k: int) -> Graph:
    return graph_from_edges(k, [(i, j) for i in range(k) for j in range(i + 1, k)])


def erdos_renyi(k: int, p: float, rng: np.random.Generator, connected: bool = True) -> Graph:
    """Seeded G(k, p) sample; with ``connected`` it resamples until connected."""
    for _ in range(1000):
        mask = rng.random((k, k)) < p
        g = graph_from_edges(k, [(i, j) for i in range(k) for j in range(i + 1, k) if mask[i, j]])
        if not connected or is_connected(g):
            return g
    # p too small to ever connect; fall back to a random spanning tree plus the sample
    order = rng.permutation(k)
    tree = [(int(order[i]), int(order[rng.integers(0, i)])) for i in range(1, k)]
    return graph_from_edges(k, list(g.edges) + tree)


def laplacian(g: Graph) -> np.ndarray:
    """Unweighted combinatorial Laplacian ``D - Adjacency``."""
    L = np.zeros((g.node_count, g.node_count))
    for u, v in g.edges:
        L[u, v] -= 1.0
        L[v, u] -= 1.0
        L[u, u] += 1.0
        L[v, v] += 1.0
    return L


def is_connected(g: Graph) -> bool:
    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u):
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == g.node_count


def parse_graph(text: str, source: str | None = None) -> Graph:
    """Parse ``nodes k`` followed by one ``u v`` edge per line."""
    lines = [(k, ln.split("#", 1)[0].strip()) for k, ln in enumerate(text.splitlines(), start=1)]
    lines = [(k, ln) for k, ln in lines if ln]
    if not lines:
        raise ParseError(None, "empty graph text", source)
    k0, head = lines[0]
    parts = head.split()
    if len(parts) != 2 or parts[0] != "nodes":
        raise ParseError(k0, f"expected 'nodes <k>', got {head!r}", source)
    try:
        count = int(parts[1])
    except ValueError:
        raise ParseError(k0, f"bad node count {parts[1]!r}", source) from None
    edges = []
    for k, ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise ParseError(k, f"expected 'u v', got {ln!r}", source)
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(k, f"non-integer endpoint in {ln!r}", source) from None
    try:
        return graph_from_edges(count, edges)
    except GraphShapeError as exc:
        raise ParseError(None, str(exc), source) from None


@dataclass(frozen=True)
class GridNetwork:
    m: int
    n: int
    row_graphs: tuple[Graph, ...]
    col_graphs: tuple[Graph, ...]

    def __post_init__(self):
        if len(self.row_graphs) != self.m or len(self.col_graphs) != self.n:
            raise GraphShapeError(
                f"grid {self.m}x{self.n} needs {self.m} row graphs and {self.n} column graphs"
            )
        for i, g in enumerate(self.row_graphs):
            if g.node_count != self.n:
                raise GraphShapeError(f"row graph {i} has {g.node_count} nodes, expected {self.n}")
        for j, g in enumerate(self.col_graphs):
            if g.node_count != self.m:
                raise GraphShapeError(f"column graph {j} has {g.node_count} nodes, expected {self.m}")


@dataclass(frozen=True)
class DoubleLayerNetwork:
    cluster_graph: Graph
    intra_graphs: tuple[Graph, ...]

    def __post_init__(self):
        if len(self.intra_graphs) != self.cluster_graph.node_count:
            raise GraphShapeError(
                f"{self.cluster_graph.node_count} clusters but {len(self.intra_graphs)} intra graphs"
            )

    @property
    def cluster_sizes(self) -> tuple[int, ...]:
        return tuple(g.node_count for g in self.intra_graphs)


Network = Union[GridNetwork, DoubleLayerNetwork]


def standard_grid(m: int, n: int) -> GridNetwork:
    """Nearest-neighbour grid: every row and every column is a path."""
    if m < 1 or n < 1:
        raise GraphShapeError("grid dimensions must be positive")
    return GridNetwork(m, n, tuple(path_graph(n) for _ in range(m)), tuple(path_graph(m) for _ in range(n)))


def standard_double_layer(cluster_sizes: Sequence[int]) -> DoubleLayerNetwork:
    """Path over the clusters and a path inside every cluster."""
    return DoubleLayerNetwork(path_graph(len(cluster_sizes)), tuple(path_graph(k) for k in cluster_sizes))


def assert_assumptions(net: Network) -> None:
    if isinstance(net, GridNetwork):
        for i, g in enumerate(net.row_graphs):
            if not is_connected(g):
                raise AssumptionViolated(f"row:{i}")
        for j, g in enumerate(net.col_graphs):
            if not is_connected(g):
                raise AssumptionViolated(f"col:{j}")
    elif isinstance(net, DoubleLayerNetwork):
        if not is_connected(net.cluster_graph):
            raise AssumptionViolated("cluster")
        for i, g in enumerate(net.intra_graphs):
            if not is_connected(g):
                raise AssumptionViolated(f"intra:{i}")
    else:
        raise TypeError(f"not a network: {type(net).__name__}")


def network_edge_lists(net: Network) -> dict:
    """Explicit edge lists, used to echo the topology in run summaries."""
    def dump(g: Graph) -> dict:
        return {"nodes": g.node_count, "edges": [list(e) for e in g.sorted_edges()]}

    if isinstance(net, GridNetwork):
        return {
            "row_graphs": [dump(g) for g in net.row_graphs],
            "col_graphs": [dump(g) for g in net.col_graphs],
        }
    return {"cluster": dump(net.cluster_graph), "intra": [dump(g) for g in net.intra_graphs]}
