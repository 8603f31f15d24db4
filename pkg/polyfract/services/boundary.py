"""Essential boundary, isolated contact points, and the F_partial set dynamics."""
from itertools import combinations
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, NamedTuple, Optional, Tuple

from loguru import logger
from networkx.utils import UnionFind
import networkx as nx

from polyfract.core.exceptions import NotTrivialGroupError
from polyfract.schemas.schemas import ContactPointReport, ContactVerdict
from polyfract.services.geometry import SymmetryGroup
from polyfract.services.system import ValidatedSystem, Word
from polyfract.services.wordtree import (
    EllEdge,
    LevelGraph,
    Membership,
    contact_points,
    level_graph,
    point_in_K,
    vertex_in_K,
)


class SubsetZJ:
    """A subset of Z_J stored as a bitmask."""

    __slots__ = ("J", "mask")

    def __init__(self, J: int, mask: int = 0):
        self.J = J
        self.mask = mask & ((1 << J) - 1)

    @classmethod
    def of(cls, J: int, indices: Iterable[int]) -> "SubsetZJ":
        mask = 0
        for i in indices:
            mask |= 1 << (i % J)
        return cls(J, mask)

    @classmethod
    def full(cls, J: int) -> "SubsetZJ":
        return cls(J, (1 << J) - 1)

    @classmethod
    def empty(cls, J: int) -> "SubsetZJ":
        return cls(J, 0)

    @classmethod
    def parity(cls, J: int, residue: int) -> "SubsetZJ":
        """Z_J^0 (even indices) or Z_J^1 (odd indices)."""
        return cls.of(J, range(residue % 2, J, 2))

    @classmethod
    def all_subsets(cls, J: int) -> List["SubsetZJ"]:
        return [cls(J, m) for m in range(1 << J)]

    def complement(self) -> "SubsetZJ":
        return SubsetZJ(self.J, ~self.mask)

    def __or__(self, other: "SubsetZJ") -> "SubsetZJ":
        return SubsetZJ(self.J, self.mask | other.mask)

    def __and__(self, other: "SubsetZJ") -> "SubsetZJ":
        return SubsetZJ(self.J, self.mask & other.mask)

    def __le__(self, other: "SubsetZJ") -> bool:
        return self.mask & ~other.mask == 0

    def __contains__(self, i: int) -> bool:
        return bool(self.mask >> (i % self.J) & 1)

    def __iter__(self) -> Iterator[int]:
        return (i for i in range(self.J) if self.mask >> i & 1)

    def __len__(self) -> int:
        return bin(self.mask).count("1")

    def __bool__(self) -> bool:
        return self.mask != 0

    def image(self, g) -> "SubsetZJ":
        return SubsetZJ.of(self.J, (g.index_action(i) for i in self))

    def is_invariant(self, group: SymmetryGroup) -> bool:
        return all(self.image(g) == self for g in group)

    def orbit_closure(self, group: SymmetryGroup) -> "SubsetZJ":
        out = self
        for g in group:
            out = out | self.image(g)
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubsetZJ):
            return NotImplemented
        return self.J == other.J and self.mask == other.mask

    def __hash__(self) -> int:
        return hash((self.J, self.mask))

    def __lt__(self, other: "SubsetZJ") -> bool:
        return self.mask < other.mask

    def to_list(self) -> List[int]:
        return list(self)

    def __repr__(self) -> str:
        return "{" + ",".join(str(i) for i in self) + "}"


Family = Tuple[SubsetZJ, ...]


def sorted_family(sets: Iterable[SubsetZJ]) -> Family:
    return tuple(sorted(set(sets)))


# Families of subsets

def b_family(J: int, size: int) -> Family:
    return sorted_family(SubsetZJ.of(J, c) for c in combinations(range(J), size))


def b_opposite(J: int) -> Family:
    """Z_J minus an opposite pair {s, s + J/2}; empty for odd J."""
    if J % 2:
        return ()
    full = SubsetZJ.full(J)
    return sorted_family(full & SubsetZJ.of(J, (s, s + J // 2)).complement() for s in range(J // 2))


def b_high(J: int) -> Family:
    sets = [x for size in range(1, J - 2) for x in b_family(J, size)]
    return sorted_family(sets + list(b_opposite(J)))


def b_low(J: int) -> Family:
    opposite = set(b_opposite(J))
    sets = [x for x in b_family(J, J - 2) if x not in opposite]
    return sorted_family(sets + list(b_family(J, J - 1)) + list(b_family(J, J)))


# Boundary tables along words

def word_xi(sys: ValidatedSystem, w: Word) -> Tuple[Optional[int], ...]:
    """k -> i with f_w(b_k) contained in b_i, composed letter by letter."""
    cache = sys._xi_words
    hit = cache.get(w)
    if hit is not None:
        return hit
    if len(w) == 0:
        out = tuple(range(sys.J))
    elif len(w) == 1:
        out = sys.xi[w[0]]
    else:
        head, tail = sys.xi[w[0]], word_xi(sys, w[1:])
        out = tuple(None if m is None else head[m] for m in tail)
    cache[w] = out
    return out


def word_vertex_sides(sys: ValidatedSystem, w: Word) -> Tuple[FrozenSet[int], ...]:
    """For each c, the sides of Q_* through f_w(p_c)."""
    cache = sys._sides_words
    hit = cache.get(w)
    if hit is not None:
        return hit
    J = sys.J
    if len(w) == 1:
        out = sys.vertex_sides[w[0]]
    else:
        s = w[0]
        rows = []
        for sides in word_vertex_sides(sys, w[1:]):
            if len(sides) == 2:
                # the outer vertex p_m joins b_m and b_{m+1}
                a, b = sorted(sides)
                m = a if (a + 1) % J == b else b
                rows.append(sys.vertex_sides[s][m])
            elif len(sides) == 1:
                (m,) = sides
                i = sys.xi[s][m]
                rows.append(frozenset() if i is None else frozenset((i,)))
            else:
                rows.append(frozenset())
        out = tuple(rows)
    cache[w] = out
    return out


def boundary_trace(sys: ValidatedSystem, A: Iterable[Word], Y: Optional[SubsetZJ] = None) -> SubsetZJ:
    """The sides b_i of Q_* reached by A.

    With Y, the indices i such that b_{i'}(w) lies in b_i for some w in A and
    i' in Y. Without Y, the plain trace: sides meeting K(A), which also counts
    cells touching b_i only at a vertex in K.
    """
    J = sys.J
    restrict = Y if Y is not None else SubsetZJ.full(J)
    mask = 0
    vk = vertex_in_K(sys).in_K if Y is None else frozenset()
    for w in A:
        xi = word_xi(sys, w)
        for k in restrict:
            if xi[k] is not None:
                mask |= 1 << xi[k]
        if vk:
            for c, sides in enumerate(word_vertex_sides(sys, w)):
                if c in vk:
                    for i in sides:
                        mask |= 1 << i
    return SubsetZJ(J, mask)


# Essential boundary

def essential_boundary(sys: ValidatedSystem) -> SubsetZJ:
    """Least G-invariant set containing every level-1 edge index and closed under
    i in X whenever b_i(s) lies in b_j with j in X."""
    J = sys.J
    X = SubsetZJ.of(J, [e.i for e in sys.ell_contacts] + [e.j for e in sys.ell_contacts])
    X = X.orbit_closure(sys.group)
    while True:
        grown = X
        for s in range(sys.N):
            for i in range(J):
                j = sys.xi[s][i]
                if j is not None and j in grown:
                    grown = grown | SubsetZJ.of(J, [i])
        grown = grown.orbit_closure(sys.group)
        if grown == X:
            return X
        X = grown


def is_transitive(X: SubsetZJ, group: SymmetryGroup) -> bool:
    if not X:
        return False
    return group_orbit(group, next(iter(X)), X.J) == X


def group_orbit(group: SymmetryGroup, i: int, J: int) -> SubsetZJ:
    return SubsetZJ.of(J, group.orbit(i))


# Isolated contact points

def _isolated_points(sys: ValidatedSystem, graph: LevelGraph) -> List[dict]:
    """Contact points in K whose cell star is not connected by edge contacts."""
    vk = vertex_in_K(sys).in_K
    ell = graph.to_networkx("ell")
    found = []
    for point, cells in sorted(contact_points(sys, graph).items(), key=lambda kv: sorted(kv[1])):
        star = [w for w in sorted(cells) if sys.word_contraction(w).vertices.index(point) in vk]
        if len(star) < 2:
            continue
        if not nx.is_connected(ell.subgraph(star)):
            x, y = point.to_xy()
            found.append({"point": [x, y], "cells": [sys.format_word(w) for w in star], "level": graph.level})
    return found


def _nic1(sys: ValidatedSystem) -> Tuple[bool, List[dict], Optional[str]]:
    graph = level_graph(sys, 1)
    vk = vertex_in_K(sys).in_K
    data = []
    for point, cells in sorted(contact_points(sys, graph).items(), key=lambda kv: sorted(kv[1])):
        membership = point_in_K(sys, point)
        if membership == Membership.UNKNOWN:
            return False, data, f"membership of contact point {point.to_xy()} undecided"
        star = [w for w in sorted(cells) if sys.word_contraction(w).vertices.index(point) in vk]
        if (membership == Membership.IN) != bool(star):
            logger.error(f"{sys.name}: vertex and point membership disagree at {point.to_xy()}")
        if membership == Membership.OUT or len(star) < 2:
            continue
        connected = nx.is_connected(graph.to_networkx("ell").subgraph(star))
        x, y = point.to_xy()
        data.append({"point": [x, y], "cells": [sys.format_word(w) for w in star], "connected": connected})
    return all(d["connected"] for d in data), data, None


def _nic2(sys: ValidatedSystem, essential: SubsetZJ) -> Tuple[bool, List[dict]]:
    if sys.J % 2 == 0:
        return True, []
    vk = vertex_in_K(sys).in_K
    witnesses = []
    for s in range(sys.N):
        segment_sides = {i for i in sys.xi[s] if i is not None}
        for c, sides in enumerate(sys.vertex_sides[s]):
            if c not in vk:
                continue
            for i in sides:
                if i in essential and i not in segment_sides:
                    witnesses.append({"cell": sys.ids[s], "side": i, "vertex": c})
    return not witnesses, witnesses


def _oracle(sys: ValidatedSystem, depth: int) -> Optional[dict]:
    for n in range(1, depth + 1):
        found = _isolated_points(sys, level_graph(sys, n))
        if found:
            return found[0]
    return None


def isolated_contact_report(sys: ValidatedSystem, oracle_depth: int = 3) -> ContactPointReport:
    """Decide whether K has an isolated contact point.

    J = 6 never has one. For J >= 4 the two local conditions on level-1 cells
    decide it, cross-checked by searching the level-n graphs for n <= oracle_depth.
    For J = 3 only that search runs.
    """
    found = _oracle(sys, oracle_depth)
    if sys.J == 6:
        if found is not None:
            logger.error(f"{sys.name}: isolated contact point found although J = 6: {found}")
        return ContactPointReport(verdict=ContactVerdict.NONE_EXIST, route="J6", oracle_agrees=found is None)

    if sys.J == 3:
        if found is not None:
            return ContactPointReport(verdict=ContactVerdict.EXISTS, route="oracle", witness=found, level=found["level"])
        return ContactPointReport(
            verdict=ContactVerdict.UNKNOWN,
            route="oracle",
            reason=f"no isolated contact point up to level {oracle_depth}; no criterion for J = 3",
        )

    nic1, points, reason = _nic1(sys)
    if reason is not None:
        return ContactPointReport(verdict=ContactVerdict.UNKNOWN, route="theorem", reason=reason, nic1_points=points)
    nic2, witnesses = _nic2(sys, essential_boundary(sys))

    if nic1 and nic2:
        verdict, witness, level = ContactVerdict.NONE_EXIST, None, None
    elif not nic1:
        bad = next(d for d in points if not d["connected"])
        verdict, witness, level = ContactVerdict.EXISTS, bad, 1
    else:
        verdict, witness, level = ContactVerdict.EXISTS, witnesses[0], None
    if verdict == ContactVerdict.NONE_EXIST:
        agrees = found is None
    else:
        agrees = True if found is not None else None
    if agrees is False:
        logger.error(f"{sys.name}: local criteria and level search disagree on isolated contact points")
    return ContactPointReport(
        verdict=verdict,
        route="theorem",
        witness=witness,
        level=level,
        nic1=nic1,
        nic2=nic2,
        nic1_points=points,
        nic2_witnesses=witnesses,
        oracle_agrees=agrees,
    )


# Restricted edges and components

def restricted_edges(graph: LevelGraph, Y: SubsetZJ) -> List[EllEdge]:
    """Edge contacts with both stored indices in Y."""
    return [e for e in graph.ell_edges if e.i in Y and e.j in Y]


def e_ell_components(graph: LevelGraph, Y: SubsetZJ) -> List[Tuple[Word, ...]]:
    """Connected components of (T_n, E_n(Y)), each sorted, ordered by smallest word."""
    uf = UnionFind(graph.nodes)
    for e in restricted_edges(graph, Y):
        uf.union(e.w, e.v)
    groups = [tuple(sorted(c)) for c in uf.to_sets()]
    return sorted(groups)


class ComponentDecomposition(NamedTuple):
    level: int
    X: SubsetZJ
    components: Tuple[Tuple[Word, ...], ...]
    traces: Tuple[SubsetZJ, ...]


def components(sys: ValidatedSystem, graph: LevelGraph, X: SubsetZJ) -> ComponentDecomposition:
    Y = X.complement()
    if not Y.is_invariant(sys.group):
        logger.warning(f"{sys.name}: {Y!r} is not G-invariant; using edges with both indices in it")
    parts = e_ell_components(graph, Y)
    traces = tuple(boundary_trace(sys, A, Y) for A in parts)
    return ComponentDecomposition(graph.level, X, tuple(parts), traces)


def f_partial(sys: ValidatedSystem, n: int, X: SubsetZJ) -> Family:
    """F_partial(n, X): complements of the traces of the components of the level-n graph cut along X."""
    cache = sys._f_partial
    key = (n, X.mask)
    if key not in cache:
        decomposition = components(sys, level_graph(sys, n), X)
        cache[key] = sorted_family(t.complement() for t in decomposition.traces)
    return cache[key]


def f_partial_family(sys: ValidatedSystem, family: Iterable[SubsetZJ]) -> Family:
    """Union of F_partial(1, Y) over the family."""
    out = set()
    for Y in family:
        out.update(f_partial(sys, 1, Y))
    return sorted_family(out)


class Orbit(NamedTuple):
    """Successive families F^1(X), F^2(X), ... up to the first repeat or max_n.

    When cycle_start is set, the sequence continues periodically from
    families[cycle_start].
    """

    seed: SubsetZJ
    mode: str
    families: Tuple[Family, ...]
    cycle_start: Optional[int]

    def reached_empty(self) -> bool:
        empty = SubsetZJ.empty(self.seed.J)
        return any(empty in f for f in self.families)

    def entered_low(self) -> bool:
        low = set(b_low(self.seed.J))
        return any(f and all(x in low for x in f) for f in self.families)

    def returns_to_seed(self) -> bool:
        return any(self.seed in f for f in self.families)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed.to_list(),
            "mode": self.mode,
            "families": [[x.to_list() for x in f] for f in self.families],
            "cycle_start": self.cycle_start,
        }


def iterate_families(step: Callable[[SubsetZJ], Family], seed: SubsetZJ, max_n: int) -> Tuple[Tuple[Family, ...], Optional[int]]:
    """Iterate a one-step map on families from {seed} until a family repeats.

    step gives F(1, Y) for a single set; a family maps to the union over its
    members. Returns the families F^1..F^k and the index the sequence cycles
    back to, or None when max_n was hit first.
    """
    families: List[Family] = []
    seen: Dict[Family, int] = {}
    current = sorted_family(step(seed))
    while len(families) < max_n:
        if current in seen:
            return tuple(families), seen[current]
        seen[current] = len(families)
        families.append(current)
        current = sorted_family(x for Y in current for x in step(Y))
    return tuple(families), None


def f_partial_iterate(sys: ValidatedSystem, seeds: Iterable[SubsetZJ], max_n: Optional[int] = None,
                      mode: str = "auto") -> List[Orbit]:
    """Iterate F_partial from each seed.

    composition: F^{n+1}(X) is the union of F_partial(1, Y) over Y in F^n(X);
    valid only for G = {I}, with exact cycle detection. direct: F_partial(n, X)
    on the level-n graph for n = 1..max_n.

    Raises:
        NotTrivialGroupError: composition mode with G != {I}
    """
    if mode == "auto":
        mode = "composition" if sys.group.is_trivial() else "direct"
    if mode == "composition" and not sys.group.is_trivial():
        raise NotTrivialGroupError(
            "composition of F_partial is only valid for G = {I}", {"group": sys.group.describe()})
    if max_n is None:
        max_n = 4096 if mode == "composition" else 2

    orbits = []
    for seed in seeds:
        if mode == "composition":
            families, cycle_start = iterate_families(lambda Y: f_partial(sys, 1, Y), seed, max_n)
            if cycle_start is None:
                logger.warning(f"{sys.name}: F_partial orbit of {seed!r} did not cycle within {max_n} steps")
        else:
            families = tuple(f_partial(sys, n, seed) for n in range(1, max_n + 1))
            cycle_start = None
        orbits.append(Orbit(seed, mode, families, cycle_start))
    return orbits


# Consistency checks on the dynamics

def check_empty_absorbs(orbit: Orbit) -> bool:
    """Whenever the empty set appears in F^n(X), F^n(X) lies in {empty} plus B^L."""
    J = orbit.seed.J
    allowed = set(b_low(J)) | {SubsetZJ.empty(J)}
    for family in orbit.families:
        if SubsetZJ.empty(J) in family and not all(x in allowed for x in family):
            return False
    return True


def check_low_closed(sys: ValidatedSystem) -> bool:
    """F_partial(1, X) lies in B^L for every X in B^L."""
    low = set(b_low(sys.J))
    return all(all(y in low for y in f_partial(sys, 1, X)) for X in low)


def check_monotone(sys: ValidatedSystem, n: int = 1) -> List[dict]:
    """Pairs X <= Y violating monotonicity of F_partial(n, .) in either direction."""
    subsets = SubsetZJ.all_subsets(sys.J)
    violations = []
    for X in subsets:
        FX = f_partial(sys, n, X)
        for Y in subsets:
            if not X <= Y:
                continue
            FY = f_partial(sys, n, Y)
            up = all(any(Z <= Z2 for Z2 in FY) for Z in FX)
            down = all(any(Z <= Z2 for Z in FX) for Z2 in FY)
            if not (up and down):
                violations.append({"X": X.to_list(), "Y": Y.to_list()})
    return violations
