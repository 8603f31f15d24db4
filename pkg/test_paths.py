import numpy as np
import pytest

from polyfract.core.exceptions import (
    BadIndicesError,
    BadLevelError,
    NoneFoundError,
    NotJoinableError,
    ProjectionNotEllError,
)
from polyfract.services.paths import (
    Alternation,
    PathSeq,
    alternated,
    concat,
    decompose,
    fold,
    folded_trace_check,
    h_set,
    h_star,
    is_corridor_path,
    make_path,
    random_ell_path,
    reassemble,
    sample_corridor_paths,
)
from polyfract.services.wordtree import level_graph

SW, S, SE, E, NE, N, NW, W = range(8)

# along the bottom row of the level-2 carpet, then up the right column
AROUND = [
    (SW, SW), (SW, S), (SW, SE),
    (S, SW), (S, S), (S, SE),
    (SE, SW), (SE, S), (SE, SE), (SE, E), (SE, NE),
    (E, SE), (E, E), (E, NE),
    (NE, SE), (NE, E), (NE, NE),
]


@pytest.fixture(scope="module")
def level2(carpet):
    return level_graph(carpet, 2)


def test_make_path(level2):
    gamma = make_path(level2, AROUND, "ell")
    assert len(gamma) == len(AROUND)
    assert gamma.reversed().nodes[0] == (NE, NE)
    with pytest.raises(NotJoinableError):
        make_path(level2, [(SW, SW), (SW, SE)])
    with pytest.raises(NotJoinableError):
        make_path(level2, [])


def test_decompose_and_reassemble(level2):
    gamma = make_path(level2, AROUND[:6], "ell")
    pieces = decompose(gamma, 1)
    assert pieces.projection.nodes == ((SW,), (S,))
    assert pieces.blocks[0].nodes == ((SW,), (S,), (SE,))
    assert pieces.breakpoints == (0, 3)
    assert reassemble(pieces) == gamma
    assert decompose(gamma, 0).projection.nodes == ((),)
    assert decompose(gamma, 2).blocks[0].nodes == ((),)
    with pytest.raises(BadLevelError):
        decompose(gamma, 3)


def test_concat(level2):
    first = PathSeq(2, ((S, SW), (S, S)), "ell")
    assert concat(first, PathSeq(2, ((S, S), (S, SE)), "ell"), level2).nodes == ((S, SW), (S, S), (S, SE))
    joined = concat(first, PathSeq(2, ((S, SE),), "ell"), level2)
    assert joined.nodes == ((S, SW), (S, S), (S, SE))
    assert joined.edge_kind == "ell"
    # s.s and s.e only meet at a corner
    assert concat(first, PathSeq(2, ((S, E),), "ell"), level2).edge_kind == "star"
    with pytest.raises(NotJoinableError):
        concat(first, PathSeq(2, ((NE, NE),), "ell"), level2)
    with pytest.raises(NotJoinableError):
        concat(first, PathSeq(1, ((S,),), "ell"), level2)


def test_fold_across_one_edge(carpet, level2):
    gamma = make_path(level2, AROUND[2:6], "ell")
    folded = fold(carpet, gamma, 1)
    assert folded.level == 1
    assert folded.nodes == ((SE,), (S,), (SW,))


def test_fold_around_the_corner(carpet, level2):
    folded = fold(carpet, make_path(level2, AROUND, "ell"), 1)
    assert [carpet.format_word(u) for u in folded.nodes] == [
        "sw", "s", "se", "s", "sw", "s", "se", "e", "ne", "e", "se", "e", "ne",
    ]


def test_fold_errors(carpet, level2):
    corner = make_path(level2, [(S, NE), (E, SW)])
    with pytest.raises(ProjectionNotEllError):
        fold(carpet, corner, 1)
    with pytest.raises(BadLevelError):
        fold(carpet, corner, 2)


def test_folded_trace_check(carpet, level2):
    result = folded_trace_check(carpet, make_path(level2, AROUND, "ell"), 1)
    assert result["trace"] == [0, 1, 2, 3]
    assert result["ok"]
    # the sw and ne end blocks are left out of the folding
    assert result["folded"] == ["sw", "s", "se", "s", "sw", "w", "nw", "w", "sw"]
    # projection sw -> s stays inside the M_J ball
    assert folded_trace_check(carpet, make_path(level2, AROUND[:6], "ell"), 1) is None


def test_folded_trace_check_starts_in_the_second_cell(carpet, level2):
    nodes = [(SW, NE), (S, NW), (S, N), (S, NE), (SE, NW), (E, SW), (E, W), (E, NW), (NE, SW)]
    result = folded_trace_check(carpet, make_path(level2, nodes, "ell"), 1)
    assert result["folded"] == ["nw", "n", "ne", "e", "se"]
    assert result["trace"] == [0, 1, 2, 3]
    assert result["ok"]


@pytest.mark.slow
def test_corridor_paths_fold_onto_three_sides(carpet):
    paths = sample_corridor_paths(carpet, (SW, SW), 4, 1, 200, rng_seed=11, attempts=20000, edge_kind="ell")
    assert len(paths) == 200
    results = [folded_trace_check(carpet, gamma, 2) for gamma in paths]
    # every corridor path runs from distance 1 to distance 4 of the corner cell
    assert all(r is not None for r in results)
    assert [r for r in results if not r["ok"]] == []


def test_h_sets(carpet, folded_square):
    assert h_set(carpet, (SW, S), 1, 0, 1) == {(S,), (E,), (N,), (W,)}
    assert len(h_set(carpet, (SW, S), 1, 0, 2)) == 32
    assert len(h_set(carpet, (SW, S), 1, 1, 1)) == 8
    assert h_set(carpet, (SW, S), 2, 0, 0) == {()}
    # with G = {I} only the word itself survives
    assert h_set(folded_square, (0, 3), 1, 0, 1) == {(3,)}
    with pytest.raises(BadIndicesError):
        h_set(carpet, (SW,), 2, 0, 1)


def test_h_star(carpet):
    gamma = PathSeq(2, ((SW, S), (SW, SE)), "ell")
    assert h_star(carpet, gamma, (SW,)) == {(S,), (E,), (N,), (W,), (SW,), (SE,), (NE,), (NW,)}


def test_alternation(carpet):
    s, n, e, w = (S,), (N,), (E,), (W,)
    assert alternated(carpet, [s, n], [e, w]) == Alternation.ALTERNATED
    assert alternated(carpet, [s], [n]) == Alternation.NOT_ALTERNATED
    assert alternated(carpet, [s], [(S, S)]) == Alternation.UNKNOWN
    # s.n does not reach the boundary
    assert alternated(carpet, [(S, N)], [n]) == Alternation.NOT_ALTERNATED
    # shared corner of sw and s on the bottom side
    assert alternated(carpet, [(SW,)], [s]) == Alternation.ALTERNATED


def test_corridor_sampling(carpet):
    w = (SW,)
    first = sample_corridor_paths(carpet, w, 1, 1, 3, rng_seed=7)
    again = sample_corridor_paths(carpet, w, 1, 1, 3, rng_seed=7)
    assert first == again
    assert len(first) == 3
    for gamma in first:
        assert is_corridor_path(carpet, gamma, w, 1)
    assert not is_corridor_path(carpet, PathSeq(2, ((SW, SW),), "star"), w, 1)
    ell = sample_corridor_paths(carpet, w, 1, 1, 3, rng_seed=7, edge_kind="ell")
    level2 = level_graph(carpet, 2)
    for gamma in ell:
        assert gamma.edge_kind == "ell"
        assert make_path(level2, gamma.nodes, "ell") == gamma
        assert is_corridor_path(carpet, gamma, w, 1)


def test_corridor_covering_everything(carpet):
    with pytest.raises(NoneFoundError):
        sample_corridor_paths(carpet, (SW,), 3, 1, 1)


def test_random_ell_path(level2):
    gamma = random_ell_path(level2, np.random.default_rng(0), 6)
    assert 1 <= len(gamma) <= 6
    assert len(set(gamma.nodes)) == len(gamma.nodes)
    for a, b in zip(gamma.nodes, gamma.nodes[1:]):
        assert level2.is_ell_edge(a, b)
