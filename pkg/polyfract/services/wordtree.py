"""Level-m word graphs, the geometric cross-check, and membership of points in K."""
from enum import Enum
from functools import cached_property
from itertools import product
import math
from collections import defaultdict
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Set, Tuple

import networkx as nx
from loguru import logger

from polyfract.config.settings import settings
from polyfract.core.exceptions import (
    BadLevelError,
    InternalInconsistencyError,
    MembershipUnknownError,
    TooLargeError,
    UnknownWordError,
)
from polyfract.services.algebra import CycloNumber, real_sign
from polyfract.services.geometry import ContactClass, DihedralElement, classify_contact
from polyfract.services.system import ValidatedSystem, Word, group_action_on_words


class EllEdge(NamedTuple):
    """Q_w and Q_v share the segment f_w(b_i) = f_v(b_j); R o f_w = f_v o g for the reflection R in it."""

    w: Word
    v: Word
    i: int
    j: int
    g: DihedralElement


class PointEdge(NamedTuple):
    """Q_w and Q_v meet only at f_w(p_i) = f_v(p_j)."""

    w: Word
    v: Word
    i: int
    j: int
    in_K: bool


def _canonical_ell(w: Word, v: Word, i: int, j: int, g: DihedralElement) -> EllEdge:
    if w <= v:
        return EllEdge(w, v, i, j, g)
    return EllEdge(v, w, j, i, g.inverse())


def _canonical_point(w: Word, v: Word, i: int, j: int, in_K: bool) -> PointEdge:
    if w <= v:
        return PointEdge(w, v, i, j, in_K)
    return PointEdge(v, w, j, i, in_K)


class LevelGraph:
    """The words T_m with their edge contacts and vertex contacts.

    Nodes are in lexicographic order of cell indices; edges are sorted by
    (w, v) with w < v.
    """

    def __init__(self, level: int, N: int, ell_edges: Iterable[EllEdge], point_edges: Iterable[PointEdge]):
        self.level = level
        self.N = N
        self.nodes: Tuple[Word, ...] = tuple(product(range(N), repeat=level))
        self.index: Dict[Word, int] = {w: k for k, w in enumerate(self.nodes)}
        self.ell_edges: Tuple[EllEdge, ...] = tuple(sorted(ell_edges, key=lambda e: (e.w, e.v)))
        self.point_edges: Tuple[PointEdge, ...] = tuple(sorted(point_edges, key=lambda e: (e.w, e.v)))
        self._ell: Dict[Word, Dict[Word, EllEdge]] = defaultdict(dict)
        self._point: Dict[Word, Dict[Word, PointEdge]] = defaultdict(dict)
        for e in self.ell_edges:
            self._ell[e.w][e.v] = e
            self._ell[e.v][e.w] = e
        for e in self.point_edges:
            self._point[e.w][e.v] = e
            self._point[e.v][e.w] = e
        self._nx: Dict[str, nx.Graph] = {}

    def __contains__(self, w: Word) -> bool:
        return w in self.index

    def require(self, w: Word):
        if w not in self.index:
            raise UnknownWordError(f"{w!r} is not a word of level {self.level}", {"word": list(w), "level": self.level})

    @cached_property
    def star_edges(self) -> Tuple[Tuple[Word, Word], ...]:
        pairs = [(e.w, e.v) for e in self.ell_edges] + [(e.w, e.v) for e in self.point_edges if e.in_K]
        return tuple(sorted(pairs))

    def ell_neighbors(self, w: Word) -> FrozenSet[Word]:
        return frozenset(self._ell.get(w, {}))

    def star_neighbors(self, w: Word) -> FrozenSet[Word]:
        return frozenset(self._ell.get(w, {})) | frozenset(v for v, e in self._point.get(w, {}).items() if e.in_K)

    def is_ell_edge(self, w: Word, v: Word) -> bool:
        return v in self._ell.get(w, {})

    def is_star_edge(self, w: Word, v: Word) -> bool:
        return v in self.star_neighbors(w)

    def edge_label(self, w: Word, v: Word) -> DihedralElement:
        """g with R o f_w = f_v o g for the edge contact between w and v."""
        e = self._ell[w][v]
        return e.g if e.w == w else e.g.inverse()

    def edge_indices(self, w: Word, v: Word) -> Tuple[int, int]:
        e = self._ell[w][v]
        return (e.i, e.j) if e.w == w else (e.j, e.i)

    def to_networkx(self, kind: str = "ell") -> nx.Graph:
        graph = self._nx.get(kind)
        if graph is None:
            graph = nx.Graph()
            graph.add_nodes_from(self.nodes)
            if kind == "ell":
                graph.add_edges_from((e.w, e.v) for e in self.ell_edges)
            else:
                graph.add_edges_from(self.star_edges)
            self._nx[kind] = graph
        return graph

    def same_as(self, other: "LevelGraph") -> bool:
        return (
            self.level == other.level
            and self.nodes == other.nodes
            and self.ell_edges == other.ell_edges
            and self.point_edges == other.point_edges
        )

    def __repr__(self) -> str:
        return f"LevelGraph(m={self.level}, nodes={len(self.nodes)}, ell={len(self.ell_edges)}, points={len(self.point_edges)})"


# Vertex and point membership

class VertexMembership(NamedTuple):
    in_K: FrozenSet[int]
    successors: Dict[int, FrozenSet[int]]


def vertex_in_K(sys: ValidatedSystem) -> VertexMembership:
    """The indices i with p_i in K.

    i -> j whenever f_s(p_j) = p_i for some s; p_i lies in K exactly when an
    infinite chain starts at i, so the answer is the greatest fixed point.
    """
    cached = sys._vertex_membership
    if cached is not None:
        return cached
    successors = {a: frozenset(c for _, c in sys.corner_cells[a]) for a in range(sys.J)}
    alive = {a for a in range(sys.J) if successors[a]}
    changed = True
    while changed:
        changed = False
        for a in sorted(alive):
            if not successors[a] & alive:
                alive.discard(a)
                changed = True
    result = VertexMembership(frozenset(alive), successors)
    sys._vertex_membership = result
    return result


class Membership(str, Enum):
    IN = "in"
    OUT = "out"
    UNKNOWN = "unknown"


def point_in_K(sys: ValidatedSystem, x: CycloNumber, budget: Optional[int] = None, strict: bool = False) -> Membership:
    """Decide x in K by following preimages x -> f_s^{-1}(x) for the cells containing x.

    A preimage chain returning to a point on the current path certifies a
    fixed point of some f_w, hence x in K. If every chain dies x is out.

    Raises:
        MembershipUnknownError: in strict mode, when the budget runs out
    """
    if budget is None:
        budget = settings.point_budget
    polygon = sys.polygon
    if not polygon.contains(x):
        return Membership.OUT

    dead: Set[CycloNumber] = set()
    on_stack: Set[CycloNumber] = {x}
    explored = 0

    def preimages(z: CycloNumber) -> List[CycloNumber]:
        out = []
        for f in sys.contractions:
            y = f.inverse_apply(z)
            if polygon.contains(y):
                out.append(y)
        return out

    stack = [(x, iter(preimages(x)))]
    while stack:
        z, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            on_stack.discard(z)
            dead.add(z)
            continue
        if nxt in on_stack:
            return Membership.IN
        if nxt in dead:
            continue
        explored += 1
        if explored > budget:
            logger.warning(f"{sys.name}: point membership undecided after {budget} preimages")
            if strict:
                raise MembershipUnknownError(
                    "point membership undecided", {"point": list(x.to_xy()), "budget": budget})
            return Membership.UNKNOWN
        on_stack.add(nxt)
        stack.append((nxt, iter(preimages(nxt))))
    return Membership.OUT


# Recursion

def level_one(sys: ValidatedSystem) -> LevelGraph:
    vk = vertex_in_K(sys).in_K
    ells = [EllEdge((e.s,), (e.t,), e.i, e.j, e.g) for e in sys.ell_contacts]
    points = [PointEdge((e.s,), (e.t,), e.i, e.j, e.i in vk and e.j in vk) for e in sys.point_contacts]
    return LevelGraph(1, sys.N, ells, points)


class _Trace(NamedTuple):
    """Q_u intersected with b_i as a parameter interval along b_i.

    A sub-edge f_u(b_k) has lo < hi; a single vertex f_u(p_k) has lo == hi.
    """

    u: int
    segment: bool
    k: int
    lo: CycloNumber
    hi: CycloNumber
    ends: Tuple[CycloNumber, ...]


def _traces_on_side(sys: ValidatedSystem, i: int) -> List[_Trace]:
    polygon = sys.polygon
    start, stop = polygon.edge(i)
    direction = stop - start

    def param(z: CycloNumber) -> CycloNumber:
        return polygon.dot(direction, z - start)

    traces = []
    for u, f in enumerate(sys.contractions):
        ks = [k for k in range(sys.J) if sys.xi[u][k] == i]
        if ks:
            k = ks[0]
            a, b = f.vertices[(k - 1) % sys.J], f.vertices[k]
            ta, tb = param(a), param(b)
            lo, hi = (ta, tb) if real_sign(tb - ta) > 0 else (tb, ta)
            traces.append(_Trace(u, True, k, lo, hi, (a, b)))
            continue
        cs = [c for c in range(sys.J) if i in sys.vertex_sides[u][c]]
        if cs:
            z = f.vertices[cs[0]]
            t = param(z)
            traces.append(_Trace(u, False, cs[0], t, t, (z,)))
    return traces


def _trace_contact(t1: _Trace, t2: _Trace) -> str:
    """Classify two traces on one side as same, point, none or overlap."""
    if t1.segment and t2.segment and t1.lo == t2.lo and t1.hi == t2.hi:
        return "same"
    lo = t1.lo if real_sign(t1.lo - t2.lo) >= 0 else t2.lo
    hi = t1.hi if real_sign(t1.hi - t2.hi) <= 0 else t2.hi
    gap = real_sign(hi - lo)
    if gap < 0:
        return "none"
    if gap > 0:
        return "overlap"
    # a single common parameter; it must be an endpoint of both traces
    if (lo == t1.lo or lo == t1.hi) and (lo == t2.lo or lo == t2.hi):
        return "point"
    return "overlap"


def _crossing_children(sys: ValidatedSystem, i: int, g: DihedralElement):
    """Child contacts across an edge contact with outer index i and label g.

    Returns tuples (u, u', kind, a, b, label): x.u meets y.u' where (x, y)
    is the parent edge and R o f_x = f_y o g. kind is "edge" with the new
    label, or "vertex" with label None.
    """
    cache = sys._crossing_cache
    key = (i, g)
    if key in cache:
        return cache[key]
    traces = _traces_on_side(sys, i)
    out = []
    for t1 in traces:
        for t2 in traces:
            u, u2 = t1.u, t2.u
            contact = _trace_contact(t1, t2)
            if contact == "none":
                continue
            if contact == "overlap" or (contact == "same" and u != u2):
                raise InternalInconsistencyError(
                    f"cells {sys.ids[u]} and {sys.ids[u2]} overlap along side {i}", {"side": i})
            u_img = sys.g_star[g][u2]
            h = sys.phi(u_img).inverse() * g * sys.phi(u2)
            if contact == "same":
                out.append((u, u_img, "edge", t1.k, h.index_action(t2.k), h))
                continue
            point = next(z for z in t1.ends if z in t2.ends)
            a = sys.contractions[u].vertices.index(point)
            a2 = sys.contractions[u2].vertices.index(point)
            out.append((u, u_img, "vertex", a, h.vertex_action(a2), None))
    cache[key] = out
    return out


def extend_level(sys: ValidatedSystem, graph: LevelGraph, check: bool = False) -> LevelGraph:
    """Build the level m+1 graph from the level m graph by the reflection recursion.

    With check=True every new edge label is compared against the direct
    formula g = Phi_v^{-1} Phi_w R_rho(i).

    Raises:
        InternalInconsistencyError: when recursion and local geometry disagree
    """
    vk = vertex_in_K(sys).in_K
    base = sys.level_graphs.get(1) or level_one(sys)
    ells: Dict[Tuple[Word, Word], EllEdge] = {}
    points: Dict[Tuple[Word, Word], PointEdge] = {}

    def add_ell(e: EllEdge):
        ells[(e.w, e.v)] = e

    def add_point(e: PointEdge):
        points[(e.w, e.v)] = e

    # within a parent
    for x in graph.nodes:
        for e in base.ell_edges:
            add_ell(EllEdge(x + e.w, x + e.v, e.i, e.j, e.g))
        for e in base.point_edges:
            add_point(PointEdge(x + e.w, x + e.v, e.i, e.j, e.in_K))

    # across an edge contact
    for e in graph.ell_edges:
        for u, u_img, kind, a, b, label in _crossing_children(sys, e.i, e.g):
            w, v = e.w + (u,), e.v + (u_img,)
            if kind == "edge":
                add_ell(_canonical_ell(w, v, a, b, label))
            else:
                add_point(_canonical_point(w, v, a, b, a in vk and b in vk))

    # across a vertex contact
    for e in graph.point_edges:
        for u, c in sys.corner_cells[e.i]:
            for u2, c2 in sys.corner_cells[e.j]:
                add_point(_canonical_point(e.w + (u,), e.v + (u2,), c, c2, c in vk and c2 in vk))

    overlap = set(ells) & set(points)
    if overlap:
        raise InternalInconsistencyError(
            f"{len(overlap)} pairs are both edge and vertex contacts at level {graph.level + 1}")

    result = LevelGraph(graph.level + 1, sys.N, ells.values(), points.values())
    if check:
        for e in result.ell_edges:
            expected = _direct_label(sys, e.w, e.v, e.i)
            if expected != e.g:
                raise InternalInconsistencyError(
                    f"label mismatch on {sys.format_word(e.w)}-{sys.format_word(e.v)}: {e.g!r} vs {expected!r}")
    logger.debug(f"{sys.name}: level {result.level}: {len(result.ell_edges)} edge and {len(result.point_edges)} vertex contacts")
    return result


def _direct_label(sys: ValidatedSystem, w: Word, v: Word, i: int) -> DihedralElement:
    phi_w = sys.word_contraction(w).phi
    phi_v = sys.word_contraction(v).phi
    return phi_v.inverse() * phi_w * DihedralElement.reflection_parallel_to_edge(sys.J, i)


def level_graph(sys: ValidatedSystem, m: int) -> LevelGraph:
    """The cached level-m graph, built by recursion from level 1.

    Raises:
        BadLevelError: m < 1
        TooLargeError: N^m above the configured node guard
    """
    if m < 1:
        raise BadLevelError(f"level must be at least 1, got {m}", {"level": m})
    if sys.N ** m > settings.max_level_nodes:
        raise TooLargeError(
            f"level {m} has {sys.N ** m} words, above max_level_nodes={settings.max_level_nodes}",
            {"level": m, "nodes": sys.N ** m},
        )
    graphs = sys.level_graphs
    if 1 not in graphs:
        graphs[1] = level_one(sys)
    top = max(k for k in graphs if k <= m)
    while top < m:
        graphs[top + 1] = extend_level(sys, graphs[top])
        top += 1
    return graphs[m]


def geometric_adjacency_oracle(sys: ValidatedSystem, m: int, force: bool = False, use_buckets: bool = True) -> LevelGraph:
    """Classify every pair of level-m cells by exact geometry.

    Pairs whose centers are further apart than twice the cell circumradius
    are skipped through a bucket grid unless use_buckets is False.

    Raises:
        TooLargeError: N^m above oracle_max_nodes unless forced
    """
    count = sys.N ** m
    if count > settings.oracle_max_nodes and not force:
        raise TooLargeError(
            f"oracle over {count} cells exceeds oracle_max_nodes={settings.oracle_max_nodes}",
            {"level": m, "nodes": count},
        )
    vk = vertex_in_K(sys).in_K
    words = list(product(range(sys.N), repeat=m))
    maps = {w: sys.word_contraction(w) for w in words}

    if use_buckets:
        radius = float(sys.ratio) ** m / math.cos(math.pi / sys.J)
        size = 2 * radius * 1.01
        buckets: Dict[Tuple[int, int], List[Word]] = defaultdict(list)
        keys = {}
        for w in words:
            c = maps[w].center.to_complex()
            key = (math.floor(c.real / size), math.floor(c.imag / size))
            keys[w] = key
            buckets[key].append(w)
        candidates = set()
        for w in words:
            bx, by = keys[w]
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for v in buckets.get((bx + dx, by + dy), ()):
                        if w < v:
                            candidates.add((w, v))
        pairs = sorted(candidates)
    else:
        pairs = [(w, v) for a, w in enumerate(words) for v in words[a + 1:]]

    ells, points = [], []
    for w, v in pairs:
        cls = classify_contact(maps[w], maps[v], sys.polygon)
        if cls.variant == ContactClass.OVERLAP:
            raise InternalInconsistencyError(
                f"cells {sys.format_word(w)} and {sys.format_word(v)} overlap", {"level": m})
        if cls.variant == ContactClass.EDGE:
            ells.append(EllEdge(w, v, cls.i, cls.j, _direct_label(sys, w, v, cls.i)))
        elif cls.variant == ContactClass.VERTEX:
            points.append(PointEdge(w, v, cls.i, cls.j, cls.i in vk and cls.j in vk))
    logger.info(f"{sys.name}: oracle at level {m} classified {len(pairs)} candidate pairs")
    return LevelGraph(m, sys.N, ells, points)


def gamma_ball(graph: LevelGraph, w: Word, M: int, edge_kind: str = "star") -> FrozenSet[Word]:
    """Words within M steps of w in the chosen edge set, w included.

    Raises:
        UnknownWordError: if w is not a node of the graph
    """
    graph.require(w)
    lengths = nx.single_source_shortest_path_length(graph.to_networkx(edge_kind), w, cutoff=M)
    return frozenset(lengths)


def reflect_suffix(graph: LevelGraph, sys: ValidatedSystem, w: Word, v: Word, u: Word) -> Word:
    """The word of R_{w,v}(Q_{wu}): v followed by g_*(u) for the edge label g."""
    return v + group_action_on_words(sys, graph.edge_label(w, v), u)


def contact_points(sys: ValidatedSystem, graph: LevelGraph) -> Dict[CycloNumber, FrozenSet[Word]]:
    """Every contact point with the set of level-m cells containing it."""
    cells: Dict[CycloNumber, Set[Word]] = defaultdict(set)
    for e in graph.point_edges:
        point = sys.word_contraction(e.w).vertices[e.i]
        cells[point].update((e.w, e.v))
    for e in graph.ell_edges:
        f = sys.word_contraction(e.w)
        for point in (f.vertices[(e.i - 1) % sys.J], f.vertices[e.i]):
            cells[point].update((e.w, e.v))
    return {p: frozenset(ws) for p, ws in cells.items()}


def level_stats(sys: ValidatedSystem, graph: LevelGraph) -> dict:
    star = graph.to_networkx("star")
    multiplicity = max((len(ws) for ws in contact_points(sys, graph).values()), default=1)
    if multiplicity > 6:
        logger.warning(f"{sys.name}: {multiplicity} cells share a contact point at level {graph.level}")
    return {
        "level": graph.level,
        "node_count": len(graph.nodes),
        "ell_count": len(graph.ell_edges),
        "star_count": len(graph.star_edges),
        "max_degree": max((d for _, d in star.degree()), default=0),
        "max_point_multiplicity": multiplicity,
    }
