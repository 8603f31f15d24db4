import pytest

from polyfract.core.exceptions import InternalInconsistencyError, PreconditionFailedError
from polyfract.schemas.schemas import ContactPointReport, ContactVerdict, TheoremTag, VerdictStatus
from polyfract.services.boundary import Orbit, SubsetZJ, b_low
from polyfract.services.conditions import (
    check_essential_transitive,
    check_even_j,
    check_j3,
    check_trivial_g,
    check_zj_transitive,
    condition_f1,
    condition_f2,
    condition_f3,
    decide_trivial_g,
    even_j_failure,
    neighborhood_radius,
    theorem_dispatch,
    transitive_groups,
)
from polyfract.services.geometry import SymmetryGroup

NONE_EXIST = ContactPointReport(verdict=ContactVerdict.NONE_EXIST, route="theorem")


def test_neighborhood_radius():
    assert neighborhood_radius(4) == 2
    assert neighborhood_radius(6) == 4
    assert neighborhood_radius(3) == 4
    assert neighborhood_radius(5) == 8


def test_transitive_groups_are_transitive():
    for J in (3, 4, 5, 6, 8):
        for group in transitive_groups(J):
            assert group.orbit(0) == frozenset(range(J))
    assert not SymmetryGroup.dihedral(6, 3).orbit(0) == frozenset(range(6))


def test_dispatch_tags(carpet, folded_triangle, hexa):
    verdict = theorem_dispatch(folded_triangle)
    assert verdict.applies
    assert verdict.theorem == TheoremTag.J3

    verdict = theorem_dispatch(carpet)
    assert verdict.status == VerdictStatus.CONDUCTIVELY_HOMOGENEOUS
    assert verdict.theorem == TheoremTag.ZJ_TRANSITIVE
    assert verdict.M_J == 2

    verdict = theorem_dispatch(hexa)
    assert verdict.theorem == TheoremTag.ESSENTIAL_TRANSITIVE
    assert verdict.details["essential_boundary"] == [1, 3, 5]


def test_folded_square_is_inconclusive(folded_square):
    verdict = theorem_dispatch(folded_square, NONE_EXIST)
    assert verdict.status == VerdictStatus.INCONCLUSIVE
    assert verdict.theorem == TheoremTag.NONE
    tried = [a["theorem"] for a in verdict.details["attempts"]]
    assert tried == ["J3", "ZJ_transitive", "essential_transitive", "even_J_F_partial", "trivial_G_F_partial"]


def test_single_checks(carpet, folded_square):
    assert not check_j3(carpet).applies
    assert check_zj_transitive(carpet).applies
    assert not check_zj_transitive(folded_square).applies


def test_even_j_preconditions(folded_square, carpet):
    with pytest.raises(PreconditionFailedError) as err:
        check_even_j(folded_square, NONE_EXIST)
    assert any("J = 2q" in f for f in err.value.details["failed"])
    with pytest.raises(PreconditionFailedError):
        check_trivial_g(carpet, NONE_EXIST)


def test_trivial_g_on_folded_square(folded_square):
    verdict = check_trivial_g(folded_square, NONE_EXIST)
    assert verdict.theorem == TheoremTag.TRIVIAL_G_F_PARTIAL
    assert not verdict.applies
    assert verdict.details["conditions"] == {"F1": False, "F2": False, "F3": False}
    assert verdict.details["low_closed"]
    assert verdict.details["empty_absorbs"]


def test_trivial_g_needs_contact_verdict(folded_square):
    unknown = ContactPointReport(verdict=ContactVerdict.UNKNOWN, route="theorem")
    with pytest.raises(PreconditionFailedError) as err:
        check_trivial_g(folded_square, unknown)
    assert len(err.value.details["failed"]) == 1


def test_even_j_failure_patterns():
    J = 6
    even, odd = SubsetZJ.parity(J, 0), SubsetZJ.parity(J, 1)
    assert even_j_failure(J, (even,), ()) == ["Z_J^0 in F(Z_J^0)"]
    assert even_j_failure(J, (), (odd,)) == ["Z_J^1 in F(Z_J^1)"]
    assert even_j_failure(J, (odd,), (even,)) == []
    assert even_j_failure(10, (SubsetZJ.parity(10, 1),), (SubsetZJ.parity(10, 0),)) == [
        "Z_J^1 in F(Z_J^0) and Z_J^0 in F(Z_J^1)"
    ]
    assert even_j_failure(J, (SubsetZJ.empty(J),), (SubsetZJ.full(J),)) == []


def _orbit(seed, *families, cycle_start=0):
    return Orbit(seed, "composition", tuple(tuple(f) for f in families), cycle_start)


def test_orbit_conditions():
    J = 4
    seed = SubsetZJ.of(J, [0])
    empty = SubsetZJ.empty(J)
    low = b_low(J)[0]

    escaping = _orbit(seed, [SubsetZJ.of(J, [1])], [empty, low])
    assert condition_f1(escaping) and condition_f2(escaping) and condition_f3(escaping)

    stuck = _orbit(seed, [SubsetZJ.of(J, [0, 2])])
    assert condition_f1(stuck)
    assert not condition_f2(stuck) and not condition_f3(stuck)

    assert decide_trivial_g([escaping]) == {"F1": True, "F2": True, "F3": True}
    # a lone seed that never returns but never escapes breaks the equivalence
    with pytest.raises(InternalInconsistencyError):
        decide_trivial_g([escaping, stuck])


def test_essential_transitive_check(hexa, folded_square):
    assert check_essential_transitive(hexa, NONE_EXIST).applies
    assert not check_essential_transitive(folded_square, NONE_EXIST).applies
