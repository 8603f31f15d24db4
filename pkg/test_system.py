import math

import pytest

from polyfract.core.exceptions import (
    DuplicateCellIdError,
    EmptyCellsError,
    JTooSmallError,
    NotInGroupError,
    SystemFileSyntaxError,
    SystemSchemaError,
    UnknownGroupKindError,
)
from polyfract.schemas.schemas import AxiomReport
from polyfract.services.fixtures import example_text, list_examples, load_example
from polyfract.services.geometry import DihedralElement
from polyfract.services.system import (
    candidate_maximal_symmetry,
    detect_trivial_symmetry,
    folding_map_images,
    group_action_on_words,
    load_system,
    require_valid,
    validate,
)
from polyfract.services.boundary import word_xi
from polyfract.services.wordtree import level_graph, vertex_in_K

CELL = '[[cells]]\nid = "a"\ncenter = "0"\n'


def _toml(J=4, r="1/2", kind="trivial", cells=CELL, extra=""):
    return f'J = {J}\nr = "{r}"\n{extra}[group]\nkind = "{kind}"\n\n{cells}'


def test_examples_are_listed_in_order():
    assert list_examples() == [
        "carpet", "folded-square", "folded-triangle", "hexa-d3", "identity-square", "opposite-corners",
    ]
    assert 'name = "carpet"' in example_text("carpet")


def test_carpet_tables(carpet):
    assert (carpet.J, carpet.N) == (4, 8)
    assert len(carpet.group) == 8
    assert len(carpet.ell_contacts) == 8
    assert len(carpet.point_contacts) == 4
    assert carpet.hausdorff_dimension == pytest.approx(math.log(8) / math.log(3))
    assert carpet.report.passed


def test_folded_square_tables(folded_square):
    assert len(folded_square.ell_contacts) == 4
    assert len(folded_square.point_contacts) == 2
    assert all(e.g.is_identity() for e in folded_square.ell_contacts)
    assert folded_square.hausdorff_dimension == pytest.approx(2.0)


def test_identity_square_fails_a4():
    result = validate(load_example("identity-square"))
    assert isinstance(result, AxiomReport)
    assert not result.passed
    assert result.failed_axioms() == ["A4"]
    assert result.check("A4").witnesses[0]["reason"] == "reflection_not_in_group"


def test_opposite_corners_fails_coverage_and_connectivity():
    result = validate(load_example("opposite-corners"))
    assert isinstance(result, AxiomReport)
    assert "A2" in result.failed_axioms()
    assert "A5" in result.failed_axioms()
    missing = {w["missing_boundary_index"] for w in result.check("A2").witnesses}
    assert missing == {2, 5}


def test_group_action_on_words(carpet):
    quarter_turn = DihedralElement(4, 2)
    assert group_action_on_words(carpet, quarter_turn, carpet.parse_word("sw.s")) == carpet.parse_word("se.e")
    assert group_action_on_words(carpet, DihedralElement.identity(4), (3, 5)) == (3, 5)


def test_group_action_rejects_outsiders(folded_square):
    with pytest.raises(NotInGroupError):
        group_action_on_words(folded_square, DihedralElement(4, 2), (0,))


def test_words_round_trip(carpet):
    w = carpet.parse_word("sw.n.e")
    assert w == (0, 5, 3)
    assert carpet.format_word(w) == "sw.n.e"
    assert carpet.parse_word("") == ()


def test_folding_map_is_consistent(folded_square, carpet):
    result = detect_trivial_symmetry(folded_square)
    assert result["foldable"]
    assert result["witnesses"] == []
    assert not detect_trivial_symmetry(carpet)["foldable"]


def test_carpet_symmetry_candidates(carpet):
    assert len(candidate_maximal_symmetry(carpet, 2).elements) == 8


@pytest.mark.parametrize(
    "text,error",
    [
        ("J = = 4", SystemFileSyntaxError),
        (_toml(kind="weird"), UnknownGroupKindError),
        (_toml(cells=""), EmptyCellsError),
        (_toml(cells=CELL + CELL), DuplicateCellIdError),
        (_toml(J=2), JTooSmallError),
        (_toml(extra="colour = 3\n"), SystemSchemaError),
    ],
)
def test_load_errors(text, error):
    with pytest.raises(error):
        load_system(text)


@pytest.mark.parametrize("r", ["3/2", "i"])
def test_ratio_must_be_real_and_contracting(r):
    with pytest.raises(SystemSchemaError):
        validate(load_system(_toml(r=r)))


def test_folding_map_images(folded_square, carpet):
    images = folding_map_images(folded_square, [(0,), (1,)])
    assert list(images) == [(0,), (1,)]
    assert images[(1,)].phi.conj
    with pytest.raises(NotInGroupError):
        folding_map_images(carpet, [(0,)])


def test_memo_tables_live_on_the_system():
    sys = require_valid(load_example("carpet"))
    assert sys._vertex_membership is None
    assert sys._crossing_cache == sys._xi_words == sys._f_partial == {}
    membership = vertex_in_K(sys)
    assert sys._vertex_membership is membership
    assert vertex_in_K(sys) is membership
    level_graph(sys, 2)
    assert sys._crossing_cache
    assert word_xi(sys, (0, 1)) == sys._xi_words[(0, 1)]
