"""System files, axiom validation and the action of G on cells and words."""
from functools import cached_property
from itertools import combinations
import math
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx
import toml
from loguru import logger
from pydantic import ValidationError as PydanticValidationError

from polyfract.core.exceptions import (
    DuplicateCellIdError,
    EmptyCellsError,
    InvalidInputError,
    JTooSmallError,
    NotInGroupError,
    SystemFileSyntaxError,
    SystemSchemaError,
    UnknownGroupKindError,
)
from polyfract.core.workers import ordered_map
from polyfract.models.system import GroupKind, GroupSpec, SystemDescription
from polyfract.schemas.schemas import AxiomCheck, AxiomReport, SystemSummary
from polyfract.services.algebra import CycloNumber, parse_expression, parse_point_expr, real_sign
from polyfract.services.geometry import (
    ContactClass,
    Contraction,
    DihedralElement,
    Polygon,
    SymmetryGroup,
    classify_contact,
    regular_polygon,
)

Word = Tuple[int, ...]


class EllContact(NamedTuple):
    s: int
    t: int
    i: int
    j: int
    g: DihedralElement


class PointContact(NamedTuple):
    s: int
    t: int
    i: int
    j: int


def load_system(text: str) -> SystemDescription:
    """Parse a system file. Only syntax and schema are checked here.

    Raises:
        SystemFileSyntaxError: malformed TOML
        UnknownGroupKindError: group.kind outside the supported constructors
        EmptyCellsError: no [[cells]] tables
        DuplicateCellIdError: repeated cell id
        SystemSchemaError: missing or unknown keys, wrong types
        ExpressionSyntaxError: malformed point expression
    """
    try:
        data = toml.loads(text)
    except toml.TomlDecodeError as e:
        raise SystemFileSyntaxError(e.msg, offset=e.pos)

    group = data.get("group")
    if isinstance(group, dict) and "kind" in group:
        valid_kinds = [k.value for k in GroupKind]
        if group["kind"] not in valid_kinds:
            raise UnknownGroupKindError(
                f"unknown group kind {group['kind']!r}",
                {"kind": group["kind"], "expected": valid_kinds},
            )

    cells = data.get("cells") or []
    if not cells:
        raise EmptyCellsError("system has no cells")
    seen = set()
    for cell in cells:
        cell_id = cell.get("id") if isinstance(cell, dict) else None
        if cell_id in seen:
            raise DuplicateCellIdError(f"duplicate cell id {cell_id!r}", {"id": cell_id})
        seen.add(cell_id)

    try:
        desc = SystemDescription.model_validate(data)
    except PydanticValidationError as e:
        errors = [{"loc": list(err["loc"]), "msg": err["msg"]} for err in e.errors()]
        raise SystemSchemaError(f"invalid system description: {errors[0]['msg']}", {"errors": errors})

    if desc.J < 3:
        raise JTooSmallError(f"J must be at least 3, got {desc.J}", {"J": desc.J})
    parse_expression(desc.r, desc.J)
    for cell in desc.cells:
        parse_expression(cell.center, desc.J)
    return desc


def load_system_file(path: Union[str, Path]) -> SystemDescription:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise InvalidInputError(f"cannot read {path}: {err.strerror}", {"path": str(path)}) from err
    return load_system(text)


def build_group(spec: GroupSpec, J: int) -> SymmetryGroup:
    if spec.kind == GroupKind.TRIVIAL:
        return SymmetryGroup.trivial(J)
    if spec.kind in (GroupKind.ROT, GroupKind.DIHEDRAL):
        if spec.k is None:
            raise SystemSchemaError(f"group kind {spec.kind.value} needs k", {"kind": spec.kind.value})
        if spec.kind == GroupKind.ROT:
            return SymmetryGroup.rot(J, spec.k)
        return SymmetryGroup.dihedral(J, spec.k)
    if spec.kind == GroupKind.DIHEDRAL_V:
        return SymmetryGroup.dihedral_v(J)
    elements = [DihedralElement(J, e.half_turns, e.conj) for e in spec.elements]
    return SymmetryGroup.explicit(J, elements)


class ValidatedSystem:
    """A system that passed (A1)-(A5), with the tables later stages read.

    Cells are indexed 0..N-1 in file order; words are tuples of these indices.
    """

    def __init__(
        self,
        description: SystemDescription,
        polygon: Polygon,
        ratio: CycloNumber,
        contractions: Sequence[Contraction],
        group: SymmetryGroup,
        contacts: Dict[Tuple[int, int], ContactClass],
        ell_contacts: Sequence[EllContact],
        point_contacts: Sequence[PointContact],
        xi: Sequence[Tuple[Optional[int], ...]],
        vertex_sides: Sequence[Tuple[FrozenSet[int], ...]],
        g_star: Dict[DihedralElement, Tuple[int, ...]],
        report: AxiomReport,
    ):
        self.description = description
        self.name = description.name or "system"
        self.J = description.J
        self.polygon = polygon
        self.ratio = ratio
        self.contractions = tuple(contractions)
        self.ids = tuple(description.cell_ids)
        self.N = len(self.contractions)
        self.group = group
        self.contacts = contacts
        self.ell_contacts = tuple(ell_contacts)
        self.point_contacts = tuple(point_contacts)
        self.xi = tuple(xi)
        self.vertex_sides = tuple(vertex_sides)
        self.g_star = g_star
        self.report = report
        self._word_maps: Dict[Word, Contraction] = {
            (): Contraction(ratio.field.one(), DihedralElement.identity(self.J), ratio.field.zero())
        }
        # level graphs, filled by wordtree.level_graph
        self.level_graphs: Dict[int, object] = {}
        # memo tables of the wordtree and boundary services
        self._vertex_membership: Optional[object] = None
        self._crossing_cache: Dict[tuple, list] = {}
        self._xi_words: Dict[Word, Tuple[Optional[int], ...]] = {}
        self._sides_words: Dict[Word, Tuple[FrozenSet[int], ...]] = {}
        self._f_partial: Dict[Tuple[int, int], object] = {}

    def phi(self, s: int) -> DihedralElement:
        return self.contractions[s].phi

    def cell_index(self, cell_id: str) -> int:
        return self.ids.index(cell_id)

    def parse_word(self, text: str) -> Word:
        """Word from dot-separated cell ids; the empty string is the empty word."""
        if not text:
            return ()
        return tuple(self.cell_index(part) for part in text.split("."))

    def format_word(self, w: Word) -> str:
        return ".".join(self.ids[s] for s in w)

    def word_contraction(self, w: Word) -> Contraction:
        """f_w = f_{w_1} o ... o f_{w_m}."""
        f = self._word_maps.get(w)
        if f is None:
            f = self.word_contraction(w[:-1]).compose(self.contractions[w[-1]])
            self._word_maps[w] = f
        return f

    @cached_property
    def weights(self) -> Tuple[float, ...]:
        return tuple(1.0 / self.N for _ in range(self.N))

    @cached_property
    def hausdorff_dimension(self) -> float:
        return -math.log(self.N) / math.log(float(self.ratio))

    @cached_property
    def corner_cells(self) -> Dict[int, Tuple[Tuple[int, int], ...]]:
        """For each outer vertex index a, the cells u with f_u(p_c) = p_a, as (u, c)."""
        table = {}
        for a, pa in enumerate(self.polygon.vertices):
            table[a] = tuple(
                (u, c) for u, f in enumerate(self.contractions) for c, v in enumerate(f.vertices) if v == pa
            )
        return table

    @cached_property
    def level_one_graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.N))
        graph.add_edges_from((e.s, e.t) for e in self.ell_contacts)
        return graph

    def summary(self) -> SystemSummary:
        return SystemSummary(
            name=self.name,
            J=self.J,
            N=self.N,
            r=self.description.r,
            r_float=float(self.ratio),
            group=self.group.describe(),
            hausdorff_dimension=self.hausdorff_dimension,
            weights=list(self.weights),
        )

    def __repr__(self) -> str:
        return f"ValidatedSystem({self.name!r}, J={self.J}, N={self.N}, {self.group!r})"


def _parse_ratio(desc: SystemDescription) -> CycloNumber:
    ratio = parse_point_expr(desc.r, desc.J)
    if not ratio.is_real():
        raise SystemSchemaError(f"r = {desc.r!r} is not real", {"r": desc.r})
    if real_sign(ratio) <= 0 or real_sign(ratio - 1) >= 0:
        raise SystemSchemaError(f"r = {desc.r!r} must lie in (0, 1)", {"r": desc.r})
    return ratio


def _check_a1(polygon: Polygon, ids, contractions) -> AxiomCheck:
    witnesses = []
    for s, f in enumerate(contractions):
        if not f.phi.in_dj_star():
            witnesses.append({"cell": ids[s], "reason": "phi_not_in_DJ_star", "phi": f.phi.to_dict()})
            continue
        for k, v in enumerate(f.vertices):
            if not polygon.contains(v):
                witnesses.append({"cell": ids[s], "reason": "vertex_outside", "vertex": k})
                break
    return AxiomCheck(axiom="A1", passed=not witnesses, witnesses=witnesses)


def _boundary_tables(polygon: Polygon, contractions):
    J = polygon.J
    xi, vertex_sides = [], []
    for f in contractions:
        sides = tuple(polygon.boundary_sides(v) for v in f.vertices)
        row = []
        for k in range(J):
            common = sides[(k - 1) % J] & sides[k]
            row.append(min(common) if common else None)
        xi.append(tuple(row))
        vertex_sides.append(sides)
    return xi, vertex_sides


def _check_a2(J: int, xi) -> AxiomCheck:
    covered = {i for row in xi for i in row if i is not None}
    missing = sorted(set(range(J)) - covered)
    return AxiomCheck(
        axiom="A2",
        passed=not missing,
        witnesses=[{"missing_boundary_index": i} for i in missing],
    )


def _check_a3(group: SymmetryGroup, ids, contractions):
    centers = {f.center: t for t, f in enumerate(contractions)}
    g_star: Dict[DihedralElement, Tuple[int, ...]] = {}
    witnesses = []
    for g in group:
        row = []
        for s, f in enumerate(contractions):
            t = centers.get(g.apply(f.center))
            if t is None:
                witnesses.append({"element": g.to_dict(), "cell": ids[s], "reason": "no_image_cell"})
                break
            h = contractions[t].phi.inverse() * g * f.phi
            if h not in group:
                witnesses.append({"element": g.to_dict(), "cell": ids[s], "image": ids[t],
                                  "reason": "orientation_not_in_group", "residual": h.to_dict()})
                break
            row.append(t)
        else:
            g_star[g] = tuple(row)
    return AxiomCheck(axiom="A3", passed=not witnesses, witnesses=witnesses), g_star


def _check_a4(polygon: Polygon, group: SymmetryGroup, ids, contractions):
    pairs = list(combinations(range(len(contractions)), 2))
    classes = ordered_map(lambda st: classify_contact(contractions[st[0]], contractions[st[1]], polygon), pairs)
    contacts, ells, points, witnesses = {}, [], [], []
    for (s, t), cls in zip(pairs, classes):
        contacts[(s, t)] = cls
        if cls.variant == ContactClass.OVERLAP:
            witnesses.append({"pair": [ids[s], ids[t]], "reason": "overlap"})
        elif cls.variant == ContactClass.EDGE:
            g = contractions[t].phi.inverse() * contractions[s].phi * DihedralElement.reflection_parallel_to_edge(polygon.J, cls.i)
            if g not in group:
                witnesses.append({"pair": [ids[s], ids[t]], "indices": [cls.i, cls.j],
                                  "reason": "reflection_not_in_group", "element": g.to_dict()})
            ells.append(EllContact(s, t, cls.i, cls.j, g))
        elif cls.variant == ContactClass.VERTEX:
            points.append(PointContact(s, t, cls.i, cls.j))
    return AxiomCheck(axiom="A4", passed=not witnesses, witnesses=witnesses), contacts, ells, points


def _check_a5(N: int, ells) -> AxiomCheck:
    graph = nx.Graph()
    graph.add_nodes_from(range(N))
    graph.add_edges_from((e.s, e.t) for e in ells)
    components = list(nx.connected_components(graph))
    witnesses = []
    if len(components) > 1:
        witnesses.append({"components": len(components)})
    return AxiomCheck(axiom="A5", passed=not witnesses, witnesses=witnesses)


def validate(desc: SystemDescription) -> Union[ValidatedSystem, AxiomReport]:
    """Check (A1)-(A5). All five are always evaluated; any failure yields the report.

    Raises:
        SystemSchemaError: r not real or outside (0, 1)
        NotInGroupError: group constructor arguments do not describe a subgroup of D_J
    """
    polygon = regular_polygon(desc.J)
    ratio = _parse_ratio(desc)
    group = build_group(desc.group, desc.J)
    ids = desc.cell_ids
    contractions = [
        Contraction(ratio, DihedralElement(desc.J, c.phi.half_turns, c.phi.conj), parse_point_expr(c.center, desc.J, ratio))
        for c in desc.cells
    ]

    a1 = _check_a1(polygon, ids, contractions)
    xi, vertex_sides = _boundary_tables(polygon, contractions)
    a2 = _check_a2(desc.J, xi)
    a3, g_star = _check_a3(group, ids, contractions)
    a4, contacts, ells, points = _check_a4(polygon, group, ids, contractions)
    a5 = _check_a5(len(contractions), ells)

    checks = [a1, a2, a3, a4, a5]
    report = AxiomReport(passed=all(c.passed for c in checks), checks=checks)
    name = desc.name or "system"
    if not report.passed:
        logger.warning(f"{name}: axioms failed: {', '.join(report.failed_axioms())}")
        return report

    logger.success(f"{name}: (A1)-(A5) hold; {len(ells)} edge contacts, {len(points)} vertex contacts")
    return ValidatedSystem(desc, polygon, ratio, contractions, group, contacts, ells, points, xi, vertex_sides, g_star, report)


def require_valid(desc: SystemDescription) -> ValidatedSystem:
    result = validate(desc)
    if isinstance(result, AxiomReport):
        raise SystemSchemaError(
            f"system fails {', '.join(result.failed_axioms())}",
            {"axioms": result.model_dump(mode="json")},
        )
    return result


def group_action_on_words(sys: ValidatedSystem, g: DihedralElement, w: Iterable[int]) -> Word:
    """The word g_*(w) with g(Q_w) = Q_{g_*(w)}.

    Raises:
        NotInGroupError: if g is not in G
    """
    if g not in sys.group:
        raise NotInGroupError(f"{g!r} is not in G", {"element": g.to_dict()})
    current = g
    out = []
    for s in w:
        t = sys.g_star[current][s]
        out.append(t)
        current = sys.phi(t).inverse() * current * sys.phi(s)
    return tuple(out)


def detect_trivial_symmetry(sys: ValidatedSystem, graph=None) -> dict:
    """Whether G = {I}, and if so whether adjacent cells fold consistently.

    Every edge contact (w, v, i, j) must have i = j and f_w = f_v on b_i.
    Level-1 contacts are always checked; pass a level graph to check deeper.
    """
    foldable = sys.group.is_trivial()
    result = {"foldable": foldable, "witnesses": [], "checked_level": 0}
    if not foldable:
        return result

    edges = [((e.s,), (e.t,), e.i, e.j) for e in sys.ell_contacts]
    result["checked_level"] = 1
    if graph is not None:
        edges += [(e.w, e.v, e.i, e.j) for e in graph.ell_edges]
        result["checked_level"] = graph.level
    for w, v, i, j in edges:
        fw, fv = sys.word_contraction(w), sys.word_contraction(v)
        a, b = sys.polygon.edge(i)
        if i != j or fw.apply(a) != fv.apply(a) or fw.apply(b) != fv.apply(b):
            result["witnesses"].append({"pair": [sys.format_word(w), sys.format_word(v)], "indices": [i, j]})
    if result["witnesses"]:
        logger.warning(f"{sys.name}: folding map inconsistent on {len(result['witnesses'])} contacts")
    return result


def folding_map_images(sys: ValidatedSystem, words: Iterable[Word]) -> Dict[Word, Contraction]:
    """The local inverses f_w^{-1} of the folding map on each listed cell.

    Raises:
        NotInGroupError: if G is not trivial
    """
    if not sys.group.is_trivial():
        raise NotInGroupError("folding map exists only for G = {I}", {"group": sys.group.describe()})
    return {w: sys.word_contraction(w) for w in words}


class SymmetryCandidates(NamedTuple):
    elements: Tuple[DihedralElement, ...]
    verified_depth: int


def candidate_maximal_symmetry(sys: ValidatedSystem, n_max: int) -> SymmetryCandidates:
    """Elements of D_J permuting the level-n cells for every n <= n_max.

    This is an upper bound for the maximal symmetry group, checked to the
    reported depth only.
    """
    candidates = list(SymmetryGroup.full(sys.J))
    words: List[Word] = [()]
    for n in range(1, n_max + 1):
        words = [w + (s,) for w in words for s in range(sys.N)]
        cells = {frozenset(sys.word_contraction(w).vertices) for w in words}
        candidates = [g for g in candidates if all(frozenset(g.apply(v) for v in cell) in cells for cell in cells)]
        logger.debug(f"{sys.name}: {len(candidates)} symmetry candidates survive level {n}")
    return SymmetryCandidates(tuple(candidates), n_max)
