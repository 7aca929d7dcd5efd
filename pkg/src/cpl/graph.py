"""Weighted digraphs for Laplacian consensus and their privacy structure.

Edge convention: ``weights[i, j] = a_ij > 0`` means agent ``i`` listens to
agent ``j``; ``j`` is then an out-neighbor of ``i`` and the dynamics of ``i``
read ``y^j``.  Nodes are labelled 1..n in every public function and stored
0-based internally.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


class GraphError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Digraph:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise GraphError(f"weights must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            raise GraphError("weights must be finite")
        if np.any(w < 0):
            raise GraphError("weights must be nonnegative")
        if np.any(np.diag(w) != 0):
            raise GraphError("self-loops are not allowed")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int, float]]) -> "Digraph":
        """Edges ``(i, j, w)`` with 1-based labels set ``a_ij = w``."""
        w = np.zeros((n, n))
        for i, j, a in edges:
            if not (1 <= i <= n and 1 <= j <= n):
                raise GraphError(f"edge ({i}, {j}) outside 1..{n}")
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if a < 0:
                raise GraphError(f"negative weight on edge ({i}, {j})")
            w[i - 1, j - 1] = a
        return cls(w)

    @classmethod
    def undirected(cls, n: int, edges: Iterable[tuple[int, int]], weight: float = 1.0) -> "Digraph":
        pairs = [(i, j, weight) for i, j in edges] + [(j, i, weight) for i, j in edges]
        return cls.from_edges(n, pairs)

    def __eq__(self, other):
        return isinstance(other, Digraph) and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def nodes(self) -> range:
        return range(1, self.n + 1)

    def edges(self) -> list[tuple[int, int, float]]:
        ii, jj = np.nonzero(self.weights)
        return [(int(i) + 1, int(j) + 1, float(self.weights[i, j])) for i, j in zip(ii, jj)]

    def weight(self, i: int, j: int) -> float:
        return float(self.weights[self._index(i), self._index(j)])

    def out_neighbors(self, i: int) -> frozenset[int]:
        return frozenset(int(j) + 1 for j in np.flatnonzero(self.weights[self._index(i)] > 0))

    def in_neighbors(self, i: int) -> frozenset[int]:
        return frozenset(int(j) + 1 for j in np.flatnonzero(self.weights[:, self._index(i)] > 0))

    def out_degree(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def in_degree(self) -> np.ndarray:
        return self.weights.sum(axis=0)

    def subgraph(self, nodes: Iterable[int]) -> "Digraph":
        """Induced subgraph; node order follows ``sorted(nodes)``."""
        idx = [self._index(v) for v in sorted(nodes)]
        return Digraph(self.weights[np.ix_(idx, idx)])

    def _index(self, i: int) -> int:
        if not (isinstance(i, (int, np.integer)) and 1 <= i <= self.n):
            raise GraphError(f"node {i!r} not in 1..{self.n}")
        return int(i) - 1


# ----------------------------------------------------------------------------
# text format:   n <count>   /   edge <i> <j> <weight>

def parse_graph(text: str) -> Digraph:
    n = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "n" and len(parts) == 2:
                if n is not None:
                    raise GraphError("duplicate header")
                n = int(parts[1])
            elif parts[0] == "edge" and len(parts) == 4:
                if n is None:
                    raise GraphError("edge before header")
                edges.append((int(parts[1]), int(parts[2]), float(parts[3])))
            else:
                raise GraphError(f"unrecognised line {raw!r}")
        except (GraphError, ValueError) as exc:
            raise GraphError(f"line {lineno}: {exc}") from None
    if n is None or n < 1:
        raise GraphError("missing or invalid 'n <count>' header")
    seen = set()
    for i, j, _ in edges:
        if (i, j) in seen:
            raise GraphError(f"duplicate edge ({i}, {j})")
        seen.add((i, j))
    return Digraph.from_edges(n, edges)


def format_graph(g: Digraph) -> str:
    lines = [f"n {g.n}"] + [f"edge {i} {j} {a!r}" for i, j, a in g.edges()]
    return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# spectral / structural queries

def laplacian(g: Digraph) -> np.ndarray:
    """Out-Laplacian ``D_out - A``; rows sum to zero."""
    return np.diag(g.out_degree()) - g.weights


def is_weight_balanced(g: Digraph, tol: float = 1e-9) -> bool:
    return bool(np.all(np.abs(g.in_degree() - g.out_degree()) <= tol))


def strongly_connected_components(g: Digraph) -> list[frozenset[int]]:
    """Tarjan's algorithm (iterative), following ``a_ij > 0`` edges."""
    n = g.n
    succ = [np.flatnonzero(g.weights[v] > 0).tolist() for v in range(n)]
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps = []
    counter = 0
    for root in range(n):
        if index[root] >= 0:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            recurse = False
            for k in range(pos, len(succ[v])):
                w = succ[v][k]
                if index[w] < 0:
                    work.append((v, k + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w + 1)
                    if w == v:
                        break
                comps.append(frozenset(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return comps


def is_strongly_connected(g: Digraph) -> bool:
    return len(strongly_connected_components(g)) == 1


@dataclass(frozen=True)
class ReducedLaplacian:
    R: np.ndarray
    Lplus: np.ndarray


def orthonormal_complement(n: int) -> np.ndarray:
    """Columns 2..n of the Householder reflector sending ones/sqrt(n) to e_1."""
    u = np.full(n, 1.0 / np.sqrt(n))
    v = u.copy()
    v[0] -= 1.0
    vv = v @ v
    if vv == 0.0:  # n == 1
        return np.zeros((1, 0))
    H = np.eye(n) - 2.0 * np.outer(v, v) / vv
    return H[:, 1:]


def positive_definite(S: np.ndarray) -> bool:
    """Cholesky-based test on a symmetric matrix."""
    if S.size == 0:
        return True
    try:
        np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        return False
    return True


def reduced_laplacian(g: Digraph, tol: float = 1e-9) -> ReducedLaplacian:
    require_consensus_graph(g, tol)
    R = orthonormal_complement(g.n)
    Lp = R.T @ laplacian(g) @ R
    if not positive_definite(Lp + Lp.T):
        raise GraphError("L+ + L+^T is not positive definite")
    return ReducedLaplacian(R=R, Lplus=Lp)


def require_consensus_graph(g: Digraph, tol: float = 1e-9) -> None:
    if not is_strongly_connected(g):
        raise GraphError("graph is not strongly connected")
    if not is_weight_balanced(g, tol):
        gap = np.abs(g.in_degree() - g.out_degree())
        worst = int(np.argmax(gap)) + 1
        raise GraphError(f"graph is not weight-balanced (node {worst}: |d_in - d_out| = {gap.max():.3g})")


# ----------------------------------------------------------------------------
# islands

def islands(g: Digraph, agent: int, tol: float = 1e-9) -> list[frozenset[int]]:
    """Islands of ``agent``: components left after deleting it, each plus the agent.

    Components are taken in the undirected representation.  Every island is
    checked to be strongly connected and weight-balanced.
    """
    a = g._index(agent)
    if not is_strongly_connected(g):
        raise GraphError("islands need a strongly connected graph")
    sym = (g.weights > 0) | (g.weights.T > 0)
    unseen = set(range(g.n)) - {a}
    found = []
    while unseen:
        start = min(unseen)
        comp = {start}
        frontier = [start]
        while frontier:
            v = frontier.pop()
            for w in np.flatnonzero(sym[v]):
                w = int(w)
                if w != a and w not in comp:
                    comp.add(w)
                    frontier.append(w)
        unseen -= comp
        found.append(frozenset(v + 1 for v in comp | {a}))
    for isl in found:
        sub = g.subgraph(isl)
        if not (is_strongly_connected(sub) and is_weight_balanced(sub, tol)):
            raise GraphError(f"island {sorted(isl)} is not strongly connected and weight-balanced")
    return found


def island_of(g: Digraph, agent: int, node: int) -> frozenset[int]:
    for isl in islands(g, agent):
        if node in isl:
            return isl
    raise GraphError(f"node {node} not found in any island of {agent}")


def partition_island(g: Digraph, agent: int, island: Iterable[int]):
    """Split an island of ``agent`` into (V2, V3, V4).

    V2: out-neighbors of ``agent`` with an out-neighbor outside its closed
    out-neighborhood; V3: members that are not out-neighbors; V4: the rest.
    """
    island = frozenset(island)
    if island not in islands(g, agent):
        raise GraphError(f"{sorted(island)} is not an island of agent {agent}")
    closed = g.out_neighbors(agent) | {agent}
    v2, v3, v4 = set(), set(), set()
    for i in island - {agent}:
        if i not in g.out_neighbors(agent):
            v3.add(i)
        elif g.out_neighbors(i) <= closed:
            v4.add(i)
        else:
            v2.add(i)
    return frozenset(v2), frozenset(v3), frozenset(v4)


# ----------------------------------------------------------------------------
# identifiability

def can_identify_internal(g: Digraph, observer: int, target: int) -> bool:
    if observer == target:
        raise GraphError("observer and target must differ")
    nbrs = g.out_neighbors(observer)
    return target in nbrs and g.out_neighbors(target) <= nbrs | {observer}


def can_identify_external(g: Digraph, target: int, intercepted: Iterable[int]) -> bool:
    return (g.out_neighbors(target) | {target}) <= frozenset(intercepted)


def all_private(g: Digraph) -> bool:
    """No agent can identify any out-neighbor (boolean-matrix form)."""
    B = (g.weights > 0).astype(int)
    outside = 1 - (B | np.eye(g.n, dtype=int))
    # escapes[j, i]: out-neighbors of j outside the closed neighborhood of i
    escapes = B @ outside.T
    return bool(np.all(escapes.T[B > 0] > 0))


def identifiable_set(g: Digraph, observer: int) -> frozenset[int]:
    return frozenset(i for i in g.nodes if i != observer and can_identify_internal(g, observer, i))


# ----------------------------------------------------------------------------
# topology families with unit weights

def directed_ring(n: int) -> Digraph:
    if n < 3:
        raise GraphError("directed_ring needs n >= 3")
    return Digraph.from_edges(n, [(i, i % n + 1, 1.0) for i in range(1, n + 1)])


def cyclic_bipartite(m: int) -> Digraph:
    """Complete bipartite K_{m,m}; sides are 1..m and m+1..2m."""
    if m < 2:
        raise GraphError("cyclic_bipartite needs m >= 2")
    return Digraph.undirected(2 * m, [(i, m + j) for i in range(1, m + 1) for j in range(1, m + 1)])


def ring_lattice_4regular(n: int) -> Digraph:
    if n <= 5:
        raise GraphError("ring_lattice_4regular needs n > 5")
    return Digraph.undirected(n, [(i, (i - 1 + s) % n + 1) for i in range(1, n + 1) for s in (1, 2)])


def stacked_prism(rings: int, ringsize: int) -> Digraph:
    """``rings`` concentric cycles of ``ringsize`` joined spoke-wise between neighbours."""
    if rings < 2 or ringsize < 3:
        raise GraphError("stacked_prism needs rings >= 2 and ringsize >= 3")
    node = lambda r, k: r * ringsize + k % ringsize + 1  # noqa: E731
    edges = [(node(r, k), node(r, k + 1)) for r in range(rings) for k in range(ringsize)]
    edges += [(node(r, k), node(r + 1, k)) for r in range(rings - 1) for k in range(ringsize)]
    return Digraph.undirected(rings * ringsize, edges)


def grid_lattice(rows: int, cols: int) -> Digraph:
    """Rectangular grid, nodes numbered column by column."""
    if rows < 2 or cols < 2:
        raise GraphError("grid_lattice needs rows, cols >= 2")
    node = lambda r, c: c * rows + r + 1  # noqa: E731
    edges = [(node(r, c), node(r + 1, c)) for c in range(cols) for r in range(rows - 1)]
    edges += [(node(r, c), node(r, c + 1)) for c in range(cols - 1) for r in range(rows)]
    return Digraph.undirected(rows * cols, edges)


FAMILIES = {
    "directed_ring": directed_ring,
    "cyclic_bipartite": cyclic_bipartite,
    "ring_lattice_4regular": ring_lattice_4regular,
    "stacked_prism": stacked_prism,
    "grid_lattice": grid_lattice,
}


def topology(family: str, *args: int) -> Digraph:
    try:
        make = FAMILIES[family]
    except KeyError:
        raise GraphError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None
    return make(*args)
