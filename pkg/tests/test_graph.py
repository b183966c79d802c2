from itertools import combinations

import pytest
from hypothesis import given

from dynbn.errors import StructuralError
from dynbn.graph import (Dag, build_junction_tree, has_running_intersection, is_chordal,
                         max_cardinality_search, moralize, triangulate)

from conftest import dags, undirected_graphs


def edge_set(adj):
    return {frozenset((a, b)) for a in adj for b in adj[a]}


def E(*pairs):
    return {frozenset(p) for p in pairs}


def brute_force_moral_edges(dag):
    """Skeleton plus every pair of parents of every child, enumerated directly."""
    out = {frozenset(e) for e in dag.edges}
    for child in dag.ids:
        ps = [a for a, b in dag.edges if b == child]
        for i in range(len(ps)):
            for j in range(i + 1, len(ps)):
                out.add(frozenset((ps[i], ps[j])))
    return out


def has_chordless_cycle(adj):
    """Any vertex subset of size >= 4 whose induced subgraph is a single cycle."""
    nodes = list(adj)
    for k in range(4, len(nodes) + 1):
        for sub in combinations(nodes, k):
            s = set(sub)
            if any(len(adj[v] & s) != 2 for v in sub):
                continue
            # 2-regular: a single cycle iff connected
            seen, stack = {sub[0]}, [sub[0]]
            while stack:
                for w in adj[stack.pop()] & s:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            if seen == s:
                return True
    return False


def rip_by_definition(cliques):
    for i in range(1, len(cliques)):
        earlier = set().union(*map(set, cliques[:i]))
        overlap = set(cliques[i]) & earlier
        if not any(overlap <= set(cliques[j]) for j in range(i)):
            return False
    return True


# -- dag validation -------------------------------------------------------------

def test_cycle_is_structural_error():
    with pytest.raises(StructuralError, match="cycle"):
        Dag((("A", 1), ("B", 1), ("C", 1)), (("A", "B"), ("B", "C"), ("C", "A")))


@pytest.mark.parametrize("variables, edges", [
    ((("A", 1), ("A", 1)), ()),
    ((("A", 0),), ()),
    ((("A", 1),), (("A", "B"),)),
    ((("A", 1),), (("A", "A"),)),
])
def test_malformed_dag_rejected(variables, edges):
    with pytest.raises(StructuralError):
        Dag(variables, edges)


def test_moralize_on_cyclic_input_fails():
    dag = object.__new__(Dag)
    object.__setattr__(dag, "variables", (("A", 1), ("B", 1)))
    object.__setattr__(dag, "edges", (("A", "B"), ("B", "A")))
    with pytest.raises(StructuralError):
        moralize(dag)


# -- moralize -------------------------------------------------------------------

def test_moralize_collider_marries_parents():
    dag = Dag((("A", 1), ("B", 1), ("C", 1)), (("A", "C"), ("B", "C")))
    assert edge_set(moralize(dag)) == E(("A", "C"), ("B", "C"), ("A", "B"))


def test_moralize_chain_adds_nothing():
    dag = Dag((("A", 1), ("B", 1), ("C", 1)), (("A", "B"), ("B", "C")))
    assert edge_set(moralize(dag)) == E(("A", "B"), ("B", "C"))


@given(dags(max_nodes=8, min_nodes=8))
def test_moralize_matches_parent_pair_enumeration(dag):
    assert edge_set(moralize(dag)) == brute_force_moral_edges(dag)


# -- triangulate ----------------------------------------------------------------

def test_four_cycle_gets_single_chord_a_c():
    adj = {"A": {"B", "D"}, "B": {"A", "C"}, "C": {"B", "D"}, "D": {"A", "C"}}
    out = triangulate(adj)
    assert edge_set(out) - edge_set(adj) == E(("A", "C"))


def test_chordal_graph_unchanged():
    adj = {"A": {"B", "C"}, "B": {"A", "C", "D"}, "C": {"A", "B", "D"}, "D": {"B", "C"}}
    assert edge_set(triangulate(adj)) == edge_set(adj)


@given(undirected_graphs())
def test_triangulation_is_chordal_supergraph(adj):
    out = triangulate(adj)
    assert edge_set(adj) <= edge_set(out)
    assert not has_chordless_cycle(out)
    assert is_chordal(out)


@given(undirected_graphs(max_nodes=7))
def test_is_chordal_agrees_with_brute_force(adj):
    assert is_chordal(adj) == (not has_chordless_cycle(adj))


def test_triangulate_does_not_mutate_input():
    adj = {"A": {"B", "D"}, "B": {"A", "C"}, "C": {"B", "D"}, "D": {"A", "C"}}
    before = edge_set(adj)
    triangulate(adj)
    assert edge_set(adj) == before


def test_mcs_visits_every_vertex_once():
    adj = {"A": {"B"}, "B": {"A", "C"}, "C": {"B"}, "D": set()}
    order = max_cardinality_search(adj)
    assert sorted(order) == ["A", "B", "C", "D"]


# -- build_junction_tree --------------------------------------------------------

def test_collider_single_clique():
    dag = Dag((("A", 1), ("B", 1), ("C", 1)), (("A", "C"), ("B", "C")))
    tree = build_junction_tree(dag)
    assert [set(c) for c in tree.cliques] == [{"A", "B", "C"}]
    assert tree.separators == ((),)


def test_chain_two_cliques_separator_b():
    dag = Dag((("A", 1), ("B", 1), ("C", 1)), (("A", "B"), ("B", "C")))
    tree = build_junction_tree(dag)
    assert [set(c) for c in tree.cliques] == [{"A", "B"}, {"B", "C"}]
    assert tree.parents == (None, 0)
    assert tree.separators[1] == ("B",)


def test_disconnected_dag_is_forest():
    dag = Dag((("A", 1), ("B", 1), ("C", 1)), (("A", "B"),))
    tree = build_junction_tree(dag)
    assert len(tree.components()) == 2
    assert has_running_intersection(tree)


def test_cover_forces_common_clique():
    dag = Dag((("A", 1), ("B", 1), ("C", 1)), (("A", "B"), ("B", "C")))
    tree = build_junction_tree(dag, cover=[["A", "C"]])
    assert tree.find_clique(["A", "C"]) is not None


@given(dags())
def test_rip_and_family_coverage(dag):
    tree = build_junction_tree(dag)
    assert rip_by_definition(tree.cliques)
    assert has_running_intersection(tree)
    for v in dag.ids:
        assert tree.find_clique([v, *dag.parents(v)]) is not None
    # cliques are distinct, non-nested, and cover every variable exactly as declared
    sets = [set(c) for c in tree.cliques]
    assert all(not (a < b) for a in sets for b in sets)
    assert set().union(*sets) == set(dag.ids)
    for i, r in enumerate(tree.parents):
        if r is not None:
            assert r < i
            assert set(tree.separators[i]) == set(tree.cliques[i]) & set(tree.cliques[r])


@given(dags())
def test_cliques_are_complete_in_triangulated_moral_graph(dag):
    chordal = triangulate(moralize(dag))
    for c in build_junction_tree(dag).cliques:
        for a, b in combinations(c, 2):
            assert b in chordal[a]


@given(dags())
def test_deterministic(dag):
    again = Dag(dag.variables, dag.edges)
    assert build_junction_tree(dag) == build_junction_tree(again)
