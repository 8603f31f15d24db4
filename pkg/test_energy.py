import io
import math
from itertools import product

import numpy as np
import pytest

from polyfract.core.exceptions import BadBracketError, InvalidInputError
from polyfract.schemas.schemas import EnergyRow, ScalingEstimate
from polyfract.services.energy import (
    EnergyProblem,
    base_level,
    bisect_crossing,
    bounded_product,
    conductance_constant,
    default_M,
    dimar_bracket,
    edge_disparity,
    knight_ratio,
    min_energy,
    neighbor_disparity,
    p_energy,
    representatives,
    scaling_estimate,
    scaling_rows,
    two_cell_energy,
    write_energy_csv,
)
from polyfract.services.wordtree import level_graph


def _path(k, p):
    nodes = tuple(range(k + 1))
    edges = tuple((a, a + 1) for a in range(k))
    return EnergyProblem(nodes, edges, frozenset({0}), frozenset({k}), p)


def test_p_energy():
    f = {"a": 0.0, "b": 0.5, "c": 1.0}
    edges = [("a", "b"), ("b", "c"), ("c", "b"), ("a", "a")]
    assert p_energy(f, edges, 2) == pytest.approx(0.5)
    assert p_energy(f, edges, 3) == pytest.approx(0.25)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.5])
@pytest.mark.parametrize("k", range(1, 11))
def test_path_energy(p, k):
    solution = min_energy(_path(k, p))
    assert solution.value == pytest.approx(k ** (1 - p), rel=1e-8)
    assert solution.minimizer[0] == 1.0
    assert solution.minimizer[k] == 0.0


def _random_problem(seed, p):
    rng = np.random.default_rng(seed)
    size = int(rng.integers(4, 7))
    edges = [(a, a + 1) for a in range(size - 1)]
    edges += [(a, b) for a in range(size) for b in range(a + 2, size) if rng.random() < 0.4]
    return EnergyProblem(tuple(range(size)), tuple(edges), frozenset({0}), frozenset({size - 1}), p)


def _grid_minimum(problem, points=9, rounds=60):
    """Brute-force minimum over a shrinking grid of the free values."""
    size = len(problem.nodes)
    edges = np.array(problem.edges)
    center, half = np.full(size - 2, 0.5), 0.5
    best = math.inf
    for _ in range(rounds):
        axes = [np.clip(np.linspace(c - half, c + half, points), 0.0, 1.0) for c in center]
        grid = np.array(list(product(*axes)))
        f = np.hstack([np.ones((len(grid), 1)), grid, np.zeros((len(grid), 1))])
        energy = np.sum(np.abs(f[:, edges[:, 0]] - f[:, edges[:, 1]]) ** problem.p, axis=1)
        k = int(np.argmin(energy))
        best, center, half = min(best, float(energy[k])), grid[k], half * 0.7
    return best


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
@pytest.mark.parametrize("seed", range(6))
def test_matches_grid_search(seed, p):
    problem = _random_problem(seed, p)
    assert min_energy(problem).value == pytest.approx(_grid_minimum(problem), rel=1e-4)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_parallel_paths_add(p):
    nodes = ("s", "x", "y1", "y2", "t", "q", "r")
    edges = (("s", "x"), ("x", "t"), ("s", "y1"), ("y1", "y2"), ("y2", "t"), ("q", "r"))
    solution = min_energy(EnergyProblem(nodes, edges, frozenset({"s"}), frozenset({"t"}), p))
    assert solution.value == pytest.approx(2 ** (1 - p) + 3 ** (1 - p), rel=1e-6)
    # q and r touch no boundary node
    assert solution.minimizer["q"] == solution.minimizer["r"] == 0.0


def test_min_energy_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        min_energy(_path(2, 1.0))
    overlap = EnergyProblem((0, 1), ((0, 1),), frozenset({0}), frozenset({0}), 2.0)
    with pytest.raises(InvalidInputError):
        min_energy(overlap)


def test_no_free_nodes():
    problem = EnergyProblem((0, 1), ((0, 1),), frozenset({0}), frozenset({1}), 2.0)
    assert min_energy(problem).value == 1.0


def test_base_levels(carpet, folded_square):
    assert default_M(carpet) == 2
    assert base_level(carpet, 2) == 1
    assert base_level(folded_square, 2) == 2
    with pytest.raises(InvalidInputError):
        base_level(folded_square, 10, limit=2)


def test_representatives(carpet, folded_square):
    assert representatives(carpet, level_graph(carpet, 1).nodes) == [(0,), (1,)]
    assert len(representatives(folded_square, level_graph(folded_square, 2).nodes)) == 16


def test_conductance_constants(carpet, folded_square):
    assert conductance_constant(folded_square, (0,), 2, 2.0, 1) == 0.0
    corner = conductance_constant(carpet, (0,), 2, 2.0, 1)
    assert corner > 0
    assert conductance_constant(carpet, (0,), 1, 2.0, 1) > corner


def test_two_cell_energy_is_symmetric_at_p2(folded_square):
    forward = two_cell_energy(folded_square, (0,), (3,), 1, 2.0)
    backward = two_cell_energy(folded_square, (3,), (0,), 1, 2.0)
    assert forward > 0
    assert forward == pytest.approx(backward, rel=1e-6)


def test_edge_disparity_agrees_across_solvers(folded_square):
    quadratic = edge_disparity(folded_square, (0,), (1,), 1, 2.0)
    newton = edge_disparity(folded_square, (0,), (1,), 1, 2.0001)
    assert quadratic > 0
    assert newton == pytest.approx(quadratic, rel=1e-2)
    assert neighbor_disparity(folded_square, 1, 1, 2.0) >= quadratic * (1 - 1e-9)


def test_knight_ratio_and_products(carpet, folded_square):
    # every level-1 ball of the folded square is the whole square
    assert knight_ratio(folded_square, 2.0, 2, 1) == 0.0
    ratio = knight_ratio(carpet, 2.0, None, 1)
    assert 0 < ratio < math.inf
    product = bounded_product(carpet, 2.0, None, [1], [1])
    assert list(product) == [(1, 1)]
    assert 0 < product[(1, 1)] < math.inf


def test_bisect_crossing():
    lo, hi, steps = bisect_crossing(lambda p: 2 ** (2 - p), 1.5, 3.0, 0.01)
    assert lo <= 2.0 <= hi
    assert hi - lo <= 0.01
    assert steps == math.ceil(math.log2(1.5 / 0.01))


def test_dimar_bracket_edges(carpet):
    bracket = dimar_bracket(carpet, 1.5, 1.6, tol=0.5)
    assert (bracket.p_lo, bracket.p_hi, bracket.steps) == (1.5, 1.6, 0)
    assert bracket.M == 2
    with pytest.raises(BadBracketError):
        dimar_bracket(carpet, 0.5, 1.6)
    with pytest.raises(BadBracketError):
        dimar_bracket(carpet, 1.8, 1.6)


def test_scaling_rows_and_csv():
    estimate = ScalingEstimate(p=2.0, M=2, values={1: 2.0, 2: 1.0}, ratios={2: 0.5}, roots={1: 2.0, 2: 1.0})
    rows = scaling_rows(type("S", (), {"name": "demo"})(), estimate)
    assert [r.quantity for r in rows] == ["E", "E", "ratio", "root", "root"]
    out = io.StringIO()
    write_energy_csv([EnergyRow(system="demo", p=2.0, M=2, m=1, quantity="E", value=0.5)], out)
    assert out.getvalue().splitlines() == [
        "system,p,M,m,quantity,value,iterations,residual",
        "demo,2.0,2,1,E,0.5,0,0.0",
    ]


@pytest.mark.slow
def test_folded_square_scaling(folded_square):
    # the filled square is 2-dimensional: ratios tend to 2^(2 - p)
    p2 = scaling_estimate(folded_square, 2.0, m_max=5)
    assert p2.M == 2
    assert 0.9 <= p2.ratios[5] <= 1.1
    p3 = scaling_estimate(folded_square, 3.0, m_max=5)
    assert 0.4 <= p3.ratios[5] <= 0.6


@pytest.mark.slow
def test_carpet_scaling_decays_at_p2(carpet):
    estimate = scaling_estimate(carpet, 2.0, m_max=4)
    assert estimate.ratios[4] < 0.95


@pytest.mark.slow
def test_carpet_dimar_bracket(carpet):
    bracket = dimar_bracket(carpet, 1.1, 2.0, tol=0.1)
    assert 1.0 < bracket.p_lo < bracket.p_hi < 1.8928
    assert bracket.p_hi - bracket.p_lo <= 0.1
    assert bracket.steps == 4


@pytest.mark.slow
def test_carpet_product_stays_bounded(carpet):
    product = bounded_product(carpet, 2.0, None, [1, 2, 3], [1, 2])
    assert sorted(product) == [(m, n) for m in (1, 2, 3) for n in (1, 2)]
    values = list(product.values())
    assert all(0 < v < math.inf for v in values)
    assert max(values) / min(values) <= 10
