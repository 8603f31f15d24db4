"""Sufficient conditions for p-conductive homogeneity and their dispatch.

Every check returns a Verdict carrying its own theorem tag; the status is
conductively_homogeneous only when all of the check's prerequisites passed.
None of the checks can establish the opposite, so a failed check is
inconclusive.
"""
from typing import Dict, List, Optional, Sequence

from loguru import logger

from polyfract.core.exceptions import InternalInconsistencyError, PreconditionFailedError
from polyfract.schemas.schemas import (
    ContactPointReport,
    ContactVerdict,
    Prerequisite,
    TheoremTag,
    Verdict,
    VerdictStatus,
)
from polyfract.services.boundary import (
    Family,
    Orbit,
    SubsetZJ,
    b_high,
    b_low,
    check_empty_absorbs,
    check_low_closed,
    essential_boundary,
    f_partial,
    f_partial_iterate,
    is_transitive,
    isolated_contact_report,
)
from polyfract.services.geometry import SymmetryGroup
from polyfract.services.system import ValidatedSystem


def neighborhood_radius(J: int) -> int:
    """M_J: J - 2 for even J, 2J - 2 for odd J."""
    return J - 2 if J % 2 == 0 else 2 * J - 2


def _verdict(sys: ValidatedSystem, tag: TheoremTag, prerequisites: List[Prerequisite], details: Optional[dict] = None) -> Verdict:
    ok = bool(prerequisites) and all(p.passed for p in prerequisites)
    return Verdict(
        status=VerdictStatus.CONDUCTIVELY_HOMOGENEOUS if ok else VerdictStatus.INCONCLUSIVE,
        theorem=tag,
        prerequisites=prerequisites,
        details=details or {},
        M_J=neighborhood_radius(sys.J),
    )


def _contact_prerequisite(contact: ContactPointReport) -> Prerequisite:
    return Prerequisite(
        name="no_isolated_contact_points",
        passed=contact.verdict == ContactVerdict.NONE_EXIST,
        detail=f"contact verdict {contact.verdict.value} via {contact.route}",
    )


def check_j3(sys: ValidatedSystem) -> Verdict:
    return _verdict(sys, TheoremTag.J3, [Prerequisite(name="J == 3", passed=sys.J == 3, detail=f"J = {sys.J}")])


def transitive_groups(J: int) -> List[SymmetryGroup]:
    """The subgroups of D_J acting transitively on Z_J."""
    groups = [SymmetryGroup.full(J), SymmetryGroup.rot(J, J)]
    if J % 2 == 0:
        groups.append(SymmetryGroup.dihedral_v(J))
    return groups


def check_zj_transitive(sys: ValidatedSystem) -> Verdict:
    """Z_J is G-transitive.

    Raises:
        InternalInconsistencyError: if the orbit computation disagrees with the
            classification of transitive subgroups
    """
    transitive = is_transitive(SubsetZJ.full(sys.J), sys.group)
    classified = any(sys.group.same_elements(h) for h in transitive_groups(sys.J))
    if transitive != classified:
        logger.error(f"{sys.name}: transitivity of Z_J is {transitive} but the group classification says {classified}")
        raise InternalInconsistencyError(
            "Z_J transitivity disagrees with the subgroup classification",
            {"group": sys.group.describe(), "transitive": transitive},
        )
    orbits = sorted({tuple(sorted(sys.group.orbit(i))) for i in range(sys.J)})
    return _verdict(
        sys,
        TheoremTag.ZJ_TRANSITIVE,
        [Prerequisite(name="Z_J is G-transitive", passed=transitive, detail=f"orbits {orbits}")],
        {"orbits": [list(o) for o in orbits]},
    )


def check_essential_transitive(sys: ValidatedSystem, contact: ContactPointReport) -> Verdict:
    essential = essential_boundary(sys)
    transitive = is_transitive(essential, sys.group)
    return _verdict(
        sys,
        TheoremTag.ESSENTIAL_TRANSITIVE,
        [
            _contact_prerequisite(contact),
            Prerequisite(name="(Z_J)^e is G-transitive", passed=transitive, detail=f"(Z_J)^e = {essential!r}"),
        ],
        {"essential_boundary": essential.to_list()},
    )


# Even J

def even_j_failure(J: int, fam0: Family, fam1: Family) -> List[str]:
    """Failure patterns among F_partial(1, Z_J^0) = fam0 and F_partial(1, Z_J^1) = fam1.

    The mixed pattern cannot occur for J in {6, 8} and is not reported there.
    """
    even, odd = SubsetZJ.parity(J, 0), SubsetZJ.parity(J, 1)
    found = []
    if even in fam0:
        found.append("Z_J^0 in F(Z_J^0)")
    if odd in fam1:
        found.append("Z_J^1 in F(Z_J^1)")
    if J not in (6, 8) and odd in fam0 and even in fam1:
        found.append("Z_J^1 in F(Z_J^0) and Z_J^0 in F(Z_J^1)")
    return found


def check_even_j(sys: ValidatedSystem, contact: ContactPointReport) -> Verdict:
    """F_partial criterion for J = 2q, q >= 3, with G = D_q or Rot_q.

    Raises:
        PreconditionFailedError: naming the hypotheses that fail
    """
    J = sys.J
    failed = []
    if J % 2 or J < 6:
        failed.append(f"J = 2q with q >= 3 (J = {J})")
    else:
        q = J // 2
        candidates = [SymmetryGroup.dihedral(J, q), SymmetryGroup.rot(J, q)]
        if not any(sys.group.same_elements(h) for h in candidates):
            failed.append(f"G is D_{q} or Rot_{q} (G = {sys.group!r})")
    if contact.verdict != ContactVerdict.NONE_EXIST:
        failed.append(f"no isolated contact points (verdict {contact.verdict.value})")
    if failed:
        raise PreconditionFailedError("even-J criterion does not apply", {"failed": failed})

    fam0 = f_partial(sys, 1, SubsetZJ.parity(J, 0))
    fam1 = f_partial(sys, 1, SubsetZJ.parity(J, 1))
    patterns = even_j_failure(J, fam0, fam1)
    return _verdict(
        sys,
        TheoremTag.EVEN_J_F_PARTIAL,
        [
            _contact_prerequisite(contact),
            Prerequisite(name="no F_partial failure pattern", passed=not patterns, detail="; ".join(patterns) or None),
        ],
        {
            "F(Z_J^0)": [x.to_list() for x in fam0],
            "F(Z_J^1)": [x.to_list() for x in fam1],
            "patterns": patterns,
        },
    )


# Trivial G

def condition_f1(orbit: Orbit) -> bool:
    """X never reappears in its own orbit."""
    return not orbit.returns_to_seed()


def condition_f2(orbit: Orbit) -> bool:
    """Some F^n(X) contains the empty set or lies inside B^L."""
    return orbit.reached_empty() or orbit.entered_low()


def condition_f3(orbit: Orbit) -> bool:
    """Some F^n(X) lies inside {empty} plus B^L."""
    J = orbit.seed.J
    allowed = set(b_low(J)) | {SubsetZJ.empty(J)}
    return any(all(x in allowed for x in family) for family in orbit.families)


def decide_trivial_g(orbits: Sequence[Orbit]) -> Dict[str, bool]:
    """Evaluate the three equivalent orbit conditions over all seeds.

    Raises:
        InternalInconsistencyError: if they do not agree
    """
    result = {
        "F1": all(condition_f1(o) for o in orbits),
        "F2": all(condition_f2(o) for o in orbits),
        "F3": all(condition_f3(o) for o in orbits),
    }
    if len(set(result.values())) != 1:
        raise InternalInconsistencyError("F_partial orbit conditions disagree", result)
    return result


def check_trivial_g(sys: ValidatedSystem, contact: ContactPointReport) -> Verdict:
    """F_partial orbit criterion for G = {I}.

    Raises:
        PreconditionFailedError: if G is not trivial or isolated contact points are not excluded
    """
    failed = []
    if not sys.group.is_trivial():
        failed.append(f"G = {{I}} (G = {sys.group!r})")
    if contact.verdict != ContactVerdict.NONE_EXIST:
        failed.append(f"no isolated contact points (verdict {contact.verdict.value})")
    if failed:
        raise PreconditionFailedError("trivial-G criterion does not apply", {"failed": failed})

    seeds = b_high(sys.J)
    orbits = f_partial_iterate(sys, seeds, mode="composition")
    truncated = [o.seed.to_list() for o in orbits if o.cycle_start is None]
    details = {
        "orbits": [o.to_dict() for o in orbits],
        "empty_absorbs": all(check_empty_absorbs(o) for o in orbits),
        "low_closed": check_low_closed(sys),
    }
    if not details["empty_absorbs"] or not details["low_closed"]:
        logger.error(f"{sys.name}: F_partial dynamics violate the B^L closure properties")
    if truncated:
        details["truncated"] = truncated
        return _verdict(
            sys,
            TheoremTag.TRIVIAL_G_F_PARTIAL,
            [_contact_prerequisite(contact), Prerequisite(name="orbits complete", passed=False, detail=f"{truncated}")],
            details,
        )
    decided = decide_trivial_g(orbits)
    details["conditions"] = decided
    return _verdict(
        sys,
        TheoremTag.TRIVIAL_G_F_PARTIAL,
        [
            _contact_prerequisite(contact),
            Prerequisite(name="(F1) X never returns", passed=decided["F1"]),
            Prerequisite(name="(F2) orbits reach the empty set or B^L", passed=decided["F2"]),
            Prerequisite(name="(F3) orbits enter {empty} plus B^L", passed=decided["F3"]),
        ],
        details,
    )


# Dispatch

def _precondition_verdict(sys: ValidatedSystem, tag: TheoremTag, err: PreconditionFailedError) -> Verdict:
    return _verdict(
        sys,
        tag,
        [Prerequisite(name=f, passed=False) for f in err.details.get("failed", [])] or [Prerequisite(name=err.message, passed=False)],
    )


def theorem_dispatch(sys: ValidatedSystem, contact: Optional[ContactPointReport] = None) -> Verdict:
    """Run the checks in order J3, Z_J-transitive, essential-transitive, even J, trivial G.

    The first one that applies wins. Otherwise the verdict is inconclusive and
    carries every sub-report.
    """
    attempts: List[Verdict] = []

    def settle(v: Verdict) -> Optional[Verdict]:
        attempts.append(v)
        return v if v.applies else None

    hit = settle(check_j3(sys)) or settle(check_zj_transitive(sys))
    if hit is None:
        contact = contact or isolated_contact_report(sys)
        hit = settle(check_essential_transitive(sys, contact))
    if hit is None:
        for tag, check in ((TheoremTag.EVEN_J_F_PARTIAL, check_even_j), (TheoremTag.TRIVIAL_G_F_PARTIAL, check_trivial_g)):
            try:
                hit = settle(check(sys, contact))
            except PreconditionFailedError as err:
                attempts.append(_precondition_verdict(sys, tag, err))
            if hit is not None:
                break

    if hit is not None:
        logger.info(f"{sys.name}: conductively homogeneous by {hit.theorem.value}")
        return hit
    logger.info(f"{sys.name}: no sufficient condition applies")
    return Verdict(
        status=VerdictStatus.INCONCLUSIVE,
        theorem=TheoremTag.NONE,
        prerequisites=[p for v in attempts for p in v.prerequisites],
        details={
            "attempts": [v.model_dump(mode="json") for v in attempts],
            "contact": contact.model_dump(mode="json") if contact is not None else None,
        },
        M_J=neighborhood_radius(sys.J),
    )
