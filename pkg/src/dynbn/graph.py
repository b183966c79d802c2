"""Junction-tree construction from a per-timestep DAG.

The pipeline is moralize -> triangulate (minimum fill) -> maximum cardinality
search -> clique sequence with the running intersection property.  Undirected
graphs are plain ``dict[str, set[str]]`` adjacency maps whose key order follows
the DAG's variable declaration order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

from .errors import StructuralError

Graph = dict[str, set[str]]


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph over named, possibly vector-valued, variables.

    Parameters
    ----------
    variables : sequence of (id, dimension) pairs, in declaration order
    edges : sequence of (parent, child) pairs
    """

    variables: tuple[tuple[str, int], ...]
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple((str(v), int(d)) for v, d in self.variables))
        object.__setattr__(self, "edges", tuple((str(a), str(b)) for a, b in self.edges))
        ids = [v for v, _ in self.variables]
        if len(set(ids)) != len(ids):
            raise StructuralError(f"duplicate variable ids in {ids}")
        for v, d in self.variables:
            if d < 1:
                raise StructuralError(f"variable {v!r} has non-positive dimension {d}")
        known = set(ids)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise StructuralError(f"edge {a}->{b} references an undeclared variable")
            if a == b:
                raise StructuralError(f"self-loop on {a!r}")
        self.topological_order()

    @property
    def ids(self) -> list[str]:
        return [v for v, _ in self.variables]

    @property
    def dims(self) -> dict[str, int]:
        return dict(self.variables)

    def parents(self, node: str) -> list[str]:
        return [a for a, b in self.edges if b == node]

    def topological_order(self) -> list[str]:
        """Kahn's algorithm; ties resolved by declaration order."""
        indeg = {v: 0 for v in self.ids}
        children: dict[str, list[str]] = {v: [] for v in self.ids}
        for a, b in set(self.edges):
            indeg[b] += 1
            children[a].append(b)
        rank = {v: i for i, v in enumerate(self.ids)}
        ready = sorted((v for v, k in indeg.items() if k == 0), key=rank.get)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort(key=rank.get)
        if len(order) != len(indeg):
            stuck = sorted(v for v, k in indeg.items() if k > 0)
            raise StructuralError(f"cycle detected among {stuck}")
        return order


@dataclass(frozen=True)
class JunctionTree:
    """Clique sequence C[0..m-1] satisfying the running intersection property.

    ``parents[i]`` is r(i), the tree neighbour towards the component root, or
    ``None`` when C[i] opens a new component (empty separator).
    """

    cliques: tuple[tuple[str, ...], ...]
    parents: tuple[int | None, ...]
    dims: dict[str, int] = field(compare=False)

    @property
    def separators(self) -> tuple[tuple[str, ...], ...]:
        out = []
        for i, r in enumerate(self.parents):
            if r is None:
                out.append(())
            else:
                other = set(self.cliques[r])
                out.append(tuple(v for v in self.cliques[i] if v in other))
        return tuple(out)

    def __len__(self):
        return len(self.cliques)

    def children(self, i: int) -> list[int]:
        return [k for k, r in enumerate(self.parents) if r == i]

    def neighbours(self, i: int) -> list[int]:
        out = self.children(i)
        if self.parents[i] is not None:
            out.insert(0, self.parents[i])
        return out

    def edges(self) -> list[tuple[int, int]]:
        """(child, parent) pairs."""
        return [(i, r) for i, r in enumerate(self.parents) if r is not None]

    def components(self) -> list[list[int]]:
        comps: list[list[int]] = []
        where: dict[int, int] = {}
        for i, r in enumerate(self.parents):
            if r is None:
                where[i] = len(comps)
                comps.append([i])
            else:
                where[i] = where[r]
                comps[where[i]].append(i)
        return comps

    def find_clique(self, variables: Iterable[str]) -> int | None:
        """Index of the first clique containing every variable, if any."""
        want = set(variables)
        for i, c in enumerate(self.cliques):
            if want <= set(c):
                return i
        return None

    def clique_dim(self, i: int) -> int:
        return sum(self.dims[v] for v in self.cliques[i])


def moralize(dag: Dag) -> Graph:
    """Undirected skeleton of ``dag`` with all co-parents married."""
    dag.topological_order()
    adj: Graph = {v: set() for v in dag.ids}
    for a, b in dag.edges:
        adj[a].add(b)
        adj[b].add(a)
    for child in dag.ids:
        for p, q in combinations(dag.parents(child), 2):
            adj[p].add(q)
            adj[q].add(p)
    return adj


def _copy(adj: Graph) -> Graph:
    return {v: set(n) for v, n in adj.items()}


def _fill_edges(adj: Graph, v: str) -> list[tuple[str, str]]:
    nb = sorted(adj[v])
    return [(a, b) for a, b in combinations(nb, 2) if b not in adj[a]]


def elimination_order(adj: Graph) -> list[str]:
    """Greedy minimum-fill elimination order.

    Ties on fill count go to the vertex whose sorted fill-edge list is
    lexicographically smallest, then to the smallest id.
    """
    work = _copy(adj)
    order = []
    while work:
        best = min(work, key=lambda v: (len(f := _fill_edges(work, v)), f, v))
        for a, b in _fill_edges(work, best):
            work[a].add(b)
            work[b].add(a)
        for n in work[best]:
            work[n].discard(best)
        del work[best]
        order.append(best)
    return order


def triangulate(adj: Graph) -> Graph:
    """Chordal supergraph of ``adj`` by minimum-fill elimination."""
    out = _copy(adj)
    work = _copy(adj)
    for v in elimination_order(adj):
        for a, b in _fill_edges(work, v):
            for g in (work, out):
                g[a].add(b)
                g[b].add(a)
        for n in work[v]:
            work[n].discard(v)
        del work[v]
    return out


def max_cardinality_search(adj: Graph) -> list[str]:
    """Visit order picking the vertex with most visited neighbours (ties: smallest id)."""
    weight = {v: 0 for v in adj}
    order = []
    while weight:
        v = min(weight, key=lambda u: (-weight[u], u))
        order.append(v)
        del weight[v]
        for n in adj[v]:
            if n in weight:
                weight[n] += 1
    return order


def is_chordal(adj: Graph) -> bool:
    """Check that the reverse of an MCS order is a perfect elimination order."""
    order = max_cardinality_search(adj)
    pos = {v: i for i, v in enumerate(order)}
    for v in order:
        earlier = [u for u in adj[v] if pos[u] < pos[v]]
        if not earlier:
            continue
        last = max(earlier, key=pos.get)
        if not set(earlier) - {last} <= adj[last]:
            return False
    return True


def _cliques_from_mcs(adj: Graph, rank: dict[str, int]) -> list[tuple[str, ...]]:
    order = max_cardinality_search(adj)
    pos = {v: i for i, v in enumerate(order)}
    cand = []
    for v in order:
        cand.append(frozenset({v} | {u for u in adj[v] if pos[u] < pos[v]}))
    keep = [k for k in cand if not any(k < other for other in cand)]
    return [tuple(sorted(k, key=rank.get)) for k in keep]


def _attach(cliques: Sequence[tuple[str, ...]]) -> tuple[int | None, ...]:
    parents: list[int | None] = [None]
    seen = set(cliques[0]) if cliques else set()
    for i in range(1, len(cliques)):
        sep = set(cliques[i]) & seen
        if not sep:
            parents.append(None)
        else:
            parents.append(next(j for j in range(i) if sep <= set(cliques[j])))
        seen |= set(cliques[i])
    return tuple(parents)


def build_junction_tree(dag: Dag, cover: Iterable[Iterable[str]] = ()) -> JunctionTree:
    """Junction tree for ``dag``.

    Parameters
    ----------
    dag : Dag
    cover : iterable of variable sets
        Each set is made complete before triangulation so that it lands in a
        single clique (used for the variables carried over from the previous
        timestep).
    """
    adj = moralize(dag)
    for group in cover:
        group = list(group)
        for v in group:
            if v not in adj:
                raise StructuralError(f"cover variable {v!r} not in dag")
        for a, b in combinations(group, 2):
            adj[a].add(b)
            adj[b].add(a)
    chordal = triangulate(adj)
    rank = {v: i for i, v in enumerate(dag.ids)}
    cliques = _cliques_from_mcs(chordal, rank)
    return JunctionTree(tuple(cliques), _attach(cliques), dag.dims)


def has_running_intersection(tree: JunctionTree) -> bool:
    seen: set[str] = set()
    for i, c in enumerate(tree.cliques):
        overlap = set(c) & seen
        r = tree.parents[i]
        if r is None:
            if overlap:
                return False
        elif r >= i or not overlap <= set(tree.cliques[r]):
            return False
        seen |= set(c)
    return True
