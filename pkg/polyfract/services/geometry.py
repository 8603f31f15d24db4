"""The regular J-gon, its dihedral symmetries, contractions and contact classes."""
from fractions import Fraction
from functools import cached_property, lru_cache
from itertools import product
from typing import FrozenSet, Iterable, Iterator, List, Optional, Tuple

from loguru import logger

from polyfract.core.exceptions import JTooSmallError, NotInGroupError
from polyfract.services.algebra import CycloNumber, CyclotomicField, polygon_constants, real_sign


def mod_distance(i: int, j: int, J: int) -> int:
    """Cyclic distance between i and j in Z_J."""
    d = (i - j) % J
    return min(d, J - d)


class Polygon:
    """Regular J-gon with incircle radius 1.

    Edge b_i joins p_{i-1} and p_i, q_i is its midpoint and also its unit
    outer normal.
    """

    def __init__(self, J: int):
        if J < 3:
            raise JTooSmallError(f"J must be at least 3, got {J}", {"J": J})
        consts = polygon_constants(J)
        self.J = J
        self.field: CyclotomicField = consts["field"]
        self.omega: CycloNumber = consts["omega"]
        self.imag: CycloNumber = consts["i"]
        self.vertices: Tuple[CycloNumber, ...] = consts["vertices"]
        self.midpoints: Tuple[CycloNumber, ...] = consts["midpoints"]
        self._normals_conj = tuple(q.conj() for q in self.midpoints)
        self._half_neg_i = self.imag * Fraction(-1, 2)

    def edge(self, i: int) -> Tuple[CycloNumber, CycloNumber]:
        return self.vertices[(i - 1) % self.J], self.vertices[i % self.J]

    def support(self, z: CycloNumber, i: int) -> CycloNumber:
        """Re(z conj(q_i)); equals 1 exactly on the line of b_i."""
        return (z * self._normals_conj[i]).real_part()

    def contains(self, z: CycloNumber) -> bool:
        one = self.field.one()
        return all(real_sign(self.support(z, i) - one) <= 0 for i in range(self.J))

    def boundary_sides(self, z: CycloNumber) -> FrozenSet[int]:
        """Indices i with z on the line of b_i. Only meaningful for z in Q_*."""
        return frozenset(i for i in range(self.J) if self.support(z, i) == 1)

    def vertex_index(self, z: CycloNumber) -> Optional[int]:
        for k, p in enumerate(self.vertices):
            if p == z:
                return k
        return None

    def cross(self, u: CycloNumber, v: CycloNumber) -> CycloNumber:
        """Exact 2D cross product Im(conj(u) v)."""
        w = u.conj() * v
        return (w - w.conj()) * self._half_neg_i

    def dot(self, u: CycloNumber, v: CycloNumber) -> CycloNumber:
        return (u.conj() * v).real_part()

    def __repr__(self) -> str:
        return f"Polygon(J={self.J})"


@lru_cache(maxsize=None)
def regular_polygon(J: int) -> Polygon:
    return Polygon(J)


class DihedralElement:
    """Isometry z -> w^h z (conj false) or z -> w^h conj(z) (conj true), w = e^{i pi/J}."""

    __slots__ = ("J", "half_turns", "conj")

    def __init__(self, J: int, half_turns: int, conj: bool = False):
        self.J = J
        self.half_turns = half_turns % (2 * J)
        self.conj = bool(conj)

    @classmethod
    def identity(cls, J: int) -> "DihedralElement":
        return cls(J, 0, False)

    @classmethod
    def reflection_parallel_to_edge(cls, J: int, i: int) -> "DihedralElement":
        """Reflection in the line through 0 parallel to b_i."""
        return cls(J, 4 * i, True)

    @property
    def key(self) -> Tuple[int, bool]:
        return self.half_turns, self.conj

    def is_identity(self) -> bool:
        return self.half_turns == 0 and not self.conj

    def __mul__(self, other: "DihedralElement") -> "DihedralElement":
        """self after other."""
        if not isinstance(other, DihedralElement) or other.J != self.J:
            return NotImplemented
        if self.conj:
            return DihedralElement(self.J, self.half_turns - other.half_turns, not other.conj)
        return DihedralElement(self.J, self.half_turns + other.half_turns, other.conj)

    def inverse(self) -> "DihedralElement":
        if self.conj:
            return self
        return DihedralElement(self.J, -self.half_turns, False)

    def in_dj(self) -> bool:
        """True iff the element maps Q_* onto itself."""
        if self.conj:
            return self.half_turns % 2 == self.J % 2
        return self.half_turns % 2 == 0

    def in_dj_star(self) -> bool:
        return self.J % 2 == 1 or self.in_dj()

    def apply(self, z: CycloNumber) -> CycloNumber:
        field = z.field
        rot = field.zeta(self.half_turns * field.order // (2 * self.J))
        return rot * (z.conj() if self.conj else z)

    def index_action(self, i: int) -> int:
        """g_*(i): the index with g(b_i) = b_{g_*(i)}."""
        return boundary_index_action(self)[i % self.J]

    def vertex_action(self, i: int) -> int:
        """The index k with g(p_i) = p_k."""
        return vertex_index_action(self)[i % self.J]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DihedralElement):
            return NotImplemented
        return self.J == other.J and self.key == other.key

    def __lt__(self, other: "DihedralElement") -> bool:
        return (self.conj, self.half_turns) < (other.conj, other.half_turns)

    def __hash__(self) -> int:
        return hash((self.J, self.half_turns, self.conj))

    def __repr__(self) -> str:
        return f"D{self.J}({self.half_turns}{', conj' if self.conj else ''})"

    def to_dict(self) -> dict:
        return {"half_turns": self.half_turns, "conj": self.conj}


@lru_cache(maxsize=None)
def _points_permutation(J: int, half_turns: int, conj: bool, which: str) -> Tuple[int, ...]:
    g = DihedralElement(J, half_turns, conj)
    if not g.in_dj():
        raise NotInGroupError(f"{g!r} does not preserve Q_*", {"element": g.to_dict(), "J": J})
    polygon = regular_polygon(J)
    points = polygon.midpoints if which == "mid" else polygon.vertices
    lookup = {p: k for k, p in enumerate(points)}
    perm = []
    for p in points:
        image = g.apply(p)
        if image not in lookup:
            raise NotInGroupError(f"{g!r} does not permute the {which} points", {"J": J})
        perm.append(lookup[image])
    return tuple(perm)


def boundary_index_action(g: DihedralElement) -> Tuple[int, ...]:
    """Permutation g_* of Z_J with g(q_i) = q_{g_*(i)}, found by exact matching.

    Raises:
        NotInGroupError: if g is not in D_J
    """
    return _points_permutation(g.J, g.half_turns, g.conj, "mid")


def vertex_index_action(g: DihedralElement) -> Tuple[int, ...]:
    return _points_permutation(g.J, g.half_turns, g.conj, "vertex")



class SymmetryGroup:
    """A subgroup of D_J, stored as a sorted tuple of elements."""

    def __init__(self, J: int, kind: str, elements: Iterable[DihedralElement], k: Optional[int] = None):
        self.J = J
        self.kind = kind
        self.k = k
        self.elements: Tuple[DihedralElement, ...] = tuple(sorted(set(elements)))
        self._members = frozenset(self.elements)

    @classmethod
    def trivial(cls, J: int) -> "SymmetryGroup":
        return cls(J, "trivial", [DihedralElement.identity(J)])

    @classmethod
    def rot(cls, J: int, k: int) -> "SymmetryGroup":
        """Rotations by multiples of 2 pi / k."""
        _check_divisor(J, k)
        step = 2 * J // k
        return cls(J, "rot", [DihedralElement(J, step * t) for t in range(k)], k=k)

    @classmethod
    def dihedral(cls, J: int, k: int) -> "SymmetryGroup":
        """rot(k) plus the reflection in the line through 0 and q_0."""
        _check_divisor(J, k)
        step = 2 * J // k
        rotations = [DihedralElement(J, step * t) for t in range(k)]
        reflections = [DihedralElement(J, J + step * t, True) for t in range(k)]
        return cls(J, "dihedral", rotations + reflections, k=k)

    @classmethod
    def dihedral_v(cls, J: int) -> "SymmetryGroup":
        """rot(J/2) plus the reflections in the lines through opposite vertices."""
        if J % 2:
            raise NotInGroupError(f"dihedral_v needs even J, got {J}", {"J": J})
        rotations = [DihedralElement(J, 4 * t) for t in range(J // 2)]
        reflections = [DihedralElement(J, 2 - J + 4 * t, True) for t in range(J // 2)]
        return cls(J, "dihedral_v", rotations + reflections, k=J // 2)

    @classmethod
    def explicit(cls, J: int, generators: Iterable[DihedralElement]) -> "SymmetryGroup":
        """Closure of the given elements under composition."""
        generators = list(generators)
        for g in generators:
            if not g.in_dj():
                raise NotInGroupError(f"{g!r} is not in D_{J}", {"element": g.to_dict(), "J": J})
        closure = {DihedralElement.identity(J)} | set(generators)
        frontier = list(closure)
        while frontier:
            new = []
            for a, b in product(frontier, list(closure)):
                for c in (a * b, b * a):
                    if c not in closure:
                        closure.add(c)
                        new.append(c)
            frontier = new
        if len(closure) > len(set(generators)) + 1:
            logger.debug(f"explicit group closed from {len(generators)} generators to {len(closure)} elements")
        return cls(J, "explicit", closure)

    @classmethod
    def full(cls, J: int) -> "SymmetryGroup":
        return cls.dihedral(J, J)

    def __contains__(self, g: DihedralElement) -> bool:
        return g in self._members

    def __iter__(self) -> Iterator[DihedralElement]:
        return iter(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def is_trivial(self) -> bool:
        return len(self.elements) == 1

    def same_elements(self, other: "SymmetryGroup") -> bool:
        return self._members == other._members

    def orbit(self, i: int) -> FrozenSet[int]:
        return frozenset(g.index_action(i) for g in self.elements)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "order": len(self.elements),
            "elements": [g.to_dict() for g in self.elements],
        }

    def __repr__(self) -> str:
        suffix = f"({self.k})" if self.k is not None else ""
        return f"SymmetryGroup[{self.kind}{suffix}, order {len(self.elements)}]"


def _check_divisor(J: int, k: int):
    if k < 1 or J % k:
        raise NotInGroupError(f"k={k} must divide J={J}", {"J": J, "k": k})


class Contraction:
    """f(z) = r phi(z) + c."""

    def __init__(self, ratio: CycloNumber, phi: DihedralElement, center: CycloNumber):
        self.ratio = ratio
        self.phi = phi
        self.center = center

    @cached_property
    def _ratio_inverse(self) -> CycloNumber:
        return self.ratio.inverse()

    def apply(self, z: CycloNumber) -> CycloNumber:
        return self.ratio * self.phi.apply(z) + self.center

    def inverse_apply(self, z: CycloNumber) -> CycloNumber:
        return self.phi.inverse().apply((z - self.center) * self._ratio_inverse)

    def compose(self, other: "Contraction") -> "Contraction":
        """self after other."""
        return Contraction(
            self.ratio * other.ratio,
            self.phi * other.phi,
            self.ratio * self.phi.apply(other.center) + self.center,
        )

    @cached_property
    def vertices(self) -> Tuple[CycloNumber, ...]:
        return tuple(self.apply(p) for p in regular_polygon(self.phi.J).vertices)

    @cached_property
    def float_vertices(self) -> Tuple[complex, ...]:
        return tuple(v.to_complex() for v in self.vertices)

    def __repr__(self) -> str:
        return f"Contraction(r={float(self.ratio):.6g}, phi={self.phi!r}, c={self.center.to_complex():.6g})"


class ContactClass:
    """Disjoint, Edge(i, j), Vertex(i, j) or Overlap."""

    __slots__ = ("variant", "i", "j")

    DISJOINT = "disjoint"
    EDGE = "edge"
    VERTEX = "vertex"
    OVERLAP = "overlap"

    def __init__(self, variant: str, i: Optional[int] = None, j: Optional[int] = None):
        self.variant = variant
        self.i = i
        self.j = j

    @classmethod
    def disjoint(cls) -> "ContactClass":
        return cls(cls.DISJOINT)

    @classmethod
    def overlap(cls) -> "ContactClass":
        return cls(cls.OVERLAP)

    def swapped(self) -> "ContactClass":
        return ContactClass(self.variant, self.j, self.i)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ContactClass):
            return NotImplemented
        return (self.variant, self.i, self.j) == (other.variant, other.i, other.j)

    def __hash__(self) -> int:
        return hash((self.variant, self.i, self.j))

    def __repr__(self) -> str:
        if self.i is None:
            return self.variant.capitalize()
        return f"{self.variant.capitalize()}({self.i}, {self.j})"


_FLOAT_MARGIN = 1e-9


def _side_sign(polygon: Polygon, a: CycloNumber, b: CycloNumber, z: CycloNumber,
               fa: complex, fb: complex, fz: complex) -> int:
    """Sign of cross(b - a, z - a), float first, exact when near zero."""
    e = fb - fa
    d = fz - fa
    approx = e.real * d.imag - e.imag * d.real
    if abs(approx) > _FLOAT_MARGIN * (abs(e) * abs(d) + 1e-300):
        return 1 if approx > 0 else -1
    return real_sign(polygon.cross(b - a, z - a))


def _classify_on_line(polygon: Polygon, fa: Contraction, k: int, fb: Contraction,
                      on_line: List[int], a_is_first: bool) -> ContactClass:
    """Intersection of edge k of fa with the part of fb on that edge's line."""
    J = polygon.J
    va, vb = fa.vertices, fb.vertices
    a0, a1 = va[(k - 1) % J], va[k]
    direction = a1 - a0
    length = polygon.dot(direction, direction)

    def param(z: CycloNumber) -> CycloNumber:
        return polygon.dot(direction, z - a0)

    def result(variant: str, ia: int, ib: int) -> ContactClass:
        return ContactClass(variant, ia, ib) if a_is_first else ContactClass(variant, ib, ia)

    if len(on_line) == 1:
        m = on_line[0]
        t = param(vb[m])
        lo, hi = real_sign(t), real_sign(t - length)
        if lo < 0 or hi > 0:
            return ContactClass.disjoint()
        if lo == 0:
            return result(ContactClass.VERTEX, (k - 1) % J, m)
        if hi == 0:
            return result(ContactClass.VERTEX, k, m)
        return ContactClass.overlap()

    # two consecutive vertices of fb on the line form one of its edges
    m0, m1 = sorted(on_line)
    if m1 - m0 != 1:
        m0, m1 = m1, m0
    kb = m1
    if {vb[m0], vb[m1]} == {a0, a1}:
        return result(ContactClass.EDGE, k, kb)
    t0, t1 = param(vb[m0]), param(vb[m1])
    if real_sign(t1 - t0) < 0:
        t0, t1, m0, m1 = t1, t0, m1, m0
    # [t0, t1] against [0, length]
    if real_sign(t1) < 0 or real_sign(t0 - length) > 0:
        return ContactClass.disjoint()
    if real_sign(t1) == 0:
        return result(ContactClass.VERTEX, (k - 1) % J, m1)
    if real_sign(t0 - length) == 0:
        return result(ContactClass.VERTEX, k, m0)
    return ContactClass.overlap()


def _separating_edge(polygon: Polygon, fa: Contraction, fb: Contraction):
    """First edge line of fa with fb on the closed outer side, if any."""
    J = polygon.J
    orient = -1 if fa.phi.conj else 1
    va, vb = fa.vertices, fb.vertices
    fva, fvb = fa.float_vertices, fb.float_vertices
    for k in range(J):
        a0, a1 = va[(k - 1) % J], va[k]
        fa0, fa1 = fva[(k - 1) % J], fva[k]
        signs = [orient * _side_sign(polygon, a0, a1, z, fa0, fa1, fz) for z, fz in zip(vb, fvb)]
        if all(s < 0 for s in signs):
            return k, []
        if all(s <= 0 for s in signs):
            return k, [m for m, s in enumerate(signs) if s == 0]
    return None


def classify_contact(f1: Contraction, f2: Contraction, polygon: Optional[Polygon] = None) -> ContactClass:
    """Exact classification of f1(Q_*) and f2(Q_*) as Disjoint, Edge, Vertex or Overlap.

    Indices refer to the local labels: Edge(i, j) means f1(b_i) = f2(b_j) and
    Vertex(i, j) means f1(p_i) = f2(p_j) is the whole intersection. A vertex
    touching the interior of an edge, a partial edge overlap and any area
    overlap are all reported as Overlap.
    """
    polygon = polygon or regular_polygon(f1.phi.J)
    for fa, fb, a_is_first in ((f1, f2, True), (f2, f1, False)):
        found = _separating_edge(polygon, fa, fb)
        if found is None:
            continue
        k, on_line = found
        if not on_line:
            return ContactClass.disjoint()
        return _classify_on_line(polygon, fa, k, fb, on_line, a_is_first)
    return ContactClass.overlap()


def reflect_across(a: CycloNumber, b: CycloNumber, z: CycloNumber) -> CycloNumber:
    """Reflection of z in the line through a and b."""
    d = b - a
    return a + d * d.conj().inverse() * (z - a).conj()
