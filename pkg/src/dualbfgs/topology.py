"""Graph topology and dual-variable bookkeeping.

Every dual quantity in this package is stacked according to one global
ordering: directed edges are sorted by (tail, head), which makes each
node's dual block contiguous, and within a node's block the multipliers
are ordered by ascending neighbor id.  Neighborhood vectors stack the
owner's block first, followed by the neighbors' blocks in ascending id
order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TopologyError(ValueError):
    """Raised for malformed or disconnected graphs."""


@dataclass(frozen=True)
class Graph:
    """Symmetric directed-edge graph without self-loops.

    Attributes:
        n: number of nodes.
        directed_edges: all directed edges (i, j), sorted by (i, j).
        neighbors: per-node ascending neighbor lists.
        m_i: per-node degree.
        m: total directed edge count (twice the undirected count).
    """

    n: int
    directed_edges: tuple[tuple[int, int], ...]
    neighbors: tuple[tuple[int, ...], ...]
    m_i: tuple[int, ...]
    m: int
    # maps (i, j) -> position of that edge in the global ordering
    edge_index: dict[tuple[int, int], int] = field(repr=False, compare=False, default_factory=dict)
    # start of node i's contiguous edge block in the global ordering
    node_edge_offset: tuple[int, ...] = ()

    @staticmethod
    def from_undirected(n: int, undirected_edges) -> "Graph":
        """Build a Graph from an iterable of undirected pairs {i, j}."""
        adj: list[set[int]] = [set() for _ in range(n)]
        for i, j in undirected_edges:
            if i == j:
                raise TopologyError(f"self-loop at node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise TopologyError(f"edge ({i}, {j}) out of range for n={n}")
            adj[i].add(j)
            adj[j].add(i)
        neighbors = tuple(tuple(sorted(s)) for s in adj)
        _check_connected(n, neighbors)
        directed = tuple((i, j) for i in range(n) for j in neighbors[i])
        m_i = tuple(len(s) for s in neighbors)
        edge_index = {e: k for k, e in enumerate(directed)}
        offsets = tuple(int(x) for x in np.concatenate(([0], np.cumsum(m_i)[:-1])))
        return Graph(
            n=n,
            directed_edges=directed,
            neighbors=neighbors,
            m_i=m_i,
            m=len(directed),
            edge_index=edge_index,
            node_edge_offset=offsets,
        )

    def to_edge_list(self) -> str:
        """Serialize as text: first line "n m", then one undirected edge per line."""
        lines = [f"{self.n} {self.m}"]
        lines += [f"{i} {j}" for (i, j) in self.directed_edges if i < j]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_edge_list(text: str) -> "Graph":
        """Parse the edge-list text format produced by :meth:`to_edge_list`."""
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        n, m = (int(tok) for tok in lines[0].split())
        pairs = [tuple(int(tok) for tok in ln.split()) for ln in lines[1:]]
        g = Graph.from_undirected(n, pairs)
        if g.m != m:
            raise TopologyError(f"edge list declares m={m} but contains {g.m} directed edges")
        return g


def _check_connected(n: int, neighbors) -> None:
    if n < 2:
        raise TopologyError("need at least 2 nodes")
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in neighbors[i]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    if len(seen) != n:
        raise TopologyError("graph is disconnected")


def regular_cycle(n: int, k: int) -> Graph:
    """k-regular cycle: node i adjacent to the k/2 nearest nodes on each side.

    k must be even and satisfy 2 <= k < n.
    """
    if k % 2 != 0:
        raise TopologyError(f"degree k={k} must be even")
    if not (2 <= k < n):
        raise TopologyError(f"need 2 <= k < n, got k={k}, n={n}")
    edges = []
    for i in range(n):
        for d in range(1, k // 2 + 1):
            edges.append((i, (i + d) % n))
    return Graph.from_undirected(n, edges)


def laplacian(g: Graph) -> np.ndarray:
    """Dense graph Laplacian (degree matrix minus adjacency)."""
    L = np.zeros((g.n, g.n))
    for i in range(g.n):
        L[i, i] = g.m_i[i]
        for j in g.neighbors[i]:
            L[i, j] = -1.0
    return L


def incidence_operator(g: Graph, p: int) -> np.ndarray:
    """Oriented incidence operator A mapping stacked primal to edge space.

    The row block for directed edge (i, j) maps x to x_i - x_j, so
    A.T @ A equals two times the graph Laplacian, blockwise.
    """
    A = np.zeros((g.m * p, g.n * p))
    eye = np.eye(p)
    for k, (i, j) in enumerate(g.directed_edges):
        A[k * p:(k + 1) * p, i * p:(i + 1) * p] = eye
        A[k * p:(k + 1) * p, j * p:(j + 1) * p] = -eye
    return A


@dataclass(frozen=True)
class NeighborhoodIndex:
    """Block layout of one node's stacked neighborhood dual vector.

    block_order is [owner, then neighbors ascending]; offsets[k] is the
    start (in blocks, i.e. multiples of p) of block_order[k]'s slice, and
    M_i is the total number of edge blocks, m_i + sum of neighbor degrees.
    """

    owner: int
    block_order: tuple[int, ...]
    offsets: tuple[int, ...]
    M_i: int


def neighborhood_index(g: Graph, i: int) -> NeighborhoodIndex:
    """Index map for node i's neighborhood stacking (own block first)."""
    if not (0 <= i < g.n):
        raise TopologyError(f"node {i} out of range")
    order = (i,) + tuple(g.neighbors[i])
    offsets = []
    off = 0
    for j in order:
        offsets.append(off)
        off += g.m_i[j]
    return NeighborhoodIndex(owner=i, block_order=order, offsets=tuple(offsets), M_i=off)


def normalization_matrix(g: Graph, idx: NeighborhoodIndex, p: int) -> np.ndarray:
    """Diagonal of the neighborhood normalization map, length M_i * p.

    Every entry in node j's block is 1 / (m_j + 1).
    """
    diag = np.empty(idx.M_i * p)
    for j, off in zip(idx.block_order, idx.offsets):
        diag[off * p:(off + g.m_i[j]) * p] = 1.0 / (g.m_i[j] + 1)
    return diag


def neighborhood_slice_map(g: Graph, idx: NeighborhoodIndex, p: int) -> np.ndarray:
    """Global dual-vector indices selected by node idx.owner's neighborhood.

    Returns an integer array of length M_i * p; indexing a global
    (m * p,) dual vector with it yields the stacked neighborhood vector.
    """
    sel = np.empty(idx.M_i * p, dtype=np.intp)
    pos = 0
    for j in idx.block_order:
        start = g.node_edge_offset[j] * p
        count = g.m_i[j] * p
        sel[pos:pos + count] = np.arange(start, start + count)
        pos += count
    return sel
