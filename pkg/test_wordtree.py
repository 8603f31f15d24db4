from fractions import Fraction

import pytest

from polyfract.core.exceptions import BadLevelError, MembershipUnknownError, TooLargeError, UnknownWordError
from polyfract.services.wordtree import (
    Membership,
    extend_level,
    gamma_ball,
    geometric_adjacency_oracle,
    level_graph,
    level_stats,
    point_in_K,
    reflect_suffix,
    vertex_in_K,
)


def test_carpet_level_one(carpet):
    graph = level_graph(carpet, 1)
    assert len(graph.nodes) == 8
    assert len(graph.ell_edges) == 8
    assert len(graph.star_edges) == 12
    assert graph.is_ell_edge((0,), (1,))
    assert not graph.is_ell_edge((1,), (3,))
    assert graph.is_star_edge((1,), (3,))


def test_carpet_level_two_counts(carpet):
    graph = level_graph(carpet, 2)
    assert len(graph.nodes) == 64
    # 44 horizontal and 44 vertical neighbours in the 9 x 9 grid
    assert len(graph.ell_edges) == 88


SYSTEMS = ["carpet", "folded_square", "folded_triangle", "hexa"]


@pytest.mark.parametrize("level", [1, 2, pytest.param(3, marks=pytest.mark.slow)])
@pytest.mark.parametrize("name", SYSTEMS)
def test_recursion_matches_geometry(name, level, request):
    sys = request.getfixturevalue(name)
    assert level_graph(sys, level).same_as(geometric_adjacency_oracle(sys, level))


@pytest.mark.parametrize("name", SYSTEMS)
def test_oracle_buckets_change_nothing(name, request):
    sys = request.getfixturevalue(name)
    assert geometric_adjacency_oracle(sys, 2).same_as(geometric_adjacency_oracle(sys, 2, use_buckets=False))


@pytest.mark.parametrize("name", SYSTEMS)
def test_recursion_labels_match_direct_formula(name, request):
    sys = request.getfixturevalue(name)
    extend_level(sys, level_graph(sys, 1), check=True)


def test_level_guards(carpet):
    with pytest.raises(BadLevelError):
        level_graph(carpet, 0)
    with pytest.raises(TooLargeError):
        level_graph(carpet, 7)
    with pytest.raises(TooLargeError):
        geometric_adjacency_oracle(carpet, 5)


def test_vertices_in_K(carpet, folded_square):
    assert vertex_in_K(carpet).in_K == frozenset(range(4))
    assert vertex_in_K(folded_square).in_K == frozenset(range(4))


def test_point_membership(carpet, folded_square):
    zero = carpet.polygon.field.zero()
    assert point_in_K(carpet, zero) == Membership.OUT
    assert point_in_K(carpet, carpet.polygon.vertices[0]) == Membership.IN
    assert point_in_K(carpet, carpet.polygon.field.rational(2)) == Membership.OUT
    assert point_in_K(folded_square, zero) == Membership.IN


def test_point_budget_of_zero(carpet):
    # bottom-right corner of sw, one preimage step from a fixed corner
    x = carpet.word_contraction((0,)).vertices[0]
    assert point_in_K(carpet, x) == Membership.IN
    assert point_in_K(carpet, x, budget=0) == Membership.UNKNOWN
    with pytest.raises(MembershipUnknownError):
        point_in_K(carpet, x, budget=0, strict=True)


def test_gamma_balls(carpet):
    graph = level_graph(carpet, 1)
    sw = carpet.parse_word("sw")
    assert gamma_ball(graph, sw, 1) == {sw, (1,), (7,)}
    assert len(gamma_ball(graph, sw, 2)) == 7
    assert gamma_ball(graph, sw, 2, "ell") == {sw, (1,), (7,), (2,), (6,)}
    with pytest.raises(UnknownWordError):
        gamma_ball(graph, (0, 0), 1)


@pytest.mark.parametrize("level", [2, 3])
def test_hexagon_balls_project_into_parent_balls(hexa, level):
    graph, parents = level_graph(hexa, level), level_graph(hexa, level - 1)
    for w in graph.nodes:
        projected = {x[:-1] for x in gamma_ball(graph, w, 2)}
        assert projected <= gamma_ball(parents, w[:-1], 1)
    assert level_stats(hexa, graph)["max_point_multiplicity"] <= 6


def test_reflect_suffix(carpet):
    graph = level_graph(carpet, 1)
    sw, s, se = (0,), (1,), (2,)
    assert reflect_suffix(graph, carpet, sw, s, se) == s + sw
    # R_{w,v} maps Q_{wu} onto the cell it names
    reflected = carpet.word_contraction(s + sw).vertices
    original = carpet.word_contraction(sw + se).vertices
    mirror = [Fraction(-2, 3) - z.conj() for z in original]
    assert set(mirror) == set(reflected)


def test_level_stats(carpet):
    stats = level_stats(carpet, level_graph(carpet, 1))
    assert stats["node_count"] == 8
    assert stats["ell_count"] == 8
    assert stats["star_count"] == 12
    assert stats["max_degree"] == 4
    assert stats["max_point_multiplicity"] == 3


def test_neighbours_and_labels(carpet):
    graph = level_graph(carpet, 1)
    sw, s, e, se, w = (0,), (1,), (3,), (2,), (7,)
    assert graph.ell_neighbors(s) == {sw, se}
    assert graph.star_neighbors(s) == {sw, se, e, w}
    assert graph.edge_indices(sw, s) == (1, 3)
    assert graph.edge_indices(s, sw) == (3, 1)
    # the mirror across the shared vertical side
    label = graph.edge_label(sw, s)
    assert [label.index_action(i) for i in range(4)] == [0, 3, 2, 1]
    assert graph.to_networkx("ell").number_of_edges() == 8
    assert graph.to_networkx("star").number_of_edges() == 12
