"""Paths in level graphs: decomposition along prefixes, concatenation, folding,
the H sets, boundary alternation and corridor sampling."""
from enum import Enum
from functools import cmp_to_key
from itertools import product
from typing import FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from polyfract.config.settings import settings
from polyfract.core.exceptions import (
    BadIndicesError,
    BadLevelError,
    InternalInconsistencyError,
    NoneFoundError,
    NotJoinableError,
    ProjectionNotEllError,
)
from polyfract.services.algebra import CycloNumber, compare
from polyfract.services.boundary import SubsetZJ, boundary_trace, essential_boundary, word_xi
from polyfract.services.conditions import neighborhood_radius
from polyfract.services.system import ValidatedSystem, Word, group_action_on_words
from polyfract.services.wordtree import LevelGraph, gamma_ball, level_graph, vertex_in_K


class PathSeq(NamedTuple):
    level: int
    nodes: Tuple[Word, ...]
    edge_kind: str = "star"

    def __len__(self) -> int:
        return len(self.nodes)

    def reversed(self) -> "PathSeq":
        return PathSeq(self.level, tuple(reversed(self.nodes)), self.edge_kind)


class PathBlocks(NamedTuple):
    projection: PathSeq
    blocks: Tuple[PathSeq, ...]
    breakpoints: Tuple[int, ...]


def make_path(graph: LevelGraph, nodes: Iterable[Word], edge_kind: str = "star") -> PathSeq:
    """Validated path: at least one node, consecutive nodes adjacent in the edge set.

    Raises:
        NotJoinableError: if two consecutive nodes are not adjacent
    """
    nodes = tuple(tuple(w) for w in nodes)
    if not nodes:
        raise NotJoinableError("a path needs at least one node")
    adjacent = graph.is_ell_edge if edge_kind == "ell" else graph.is_star_edge
    for w in nodes:
        graph.require(w)
    for a, b in zip(nodes, nodes[1:]):
        if not adjacent(a, b):
            raise NotJoinableError(
                f"consecutive nodes are not {edge_kind}-adjacent", {"from": list(a), "to": list(b)})
    return PathSeq(graph.level, nodes, edge_kind)


def decompose(gamma: PathSeq, k: int) -> PathBlocks:
    """Split gamma into maximal runs with a constant length-k prefix.

    Raises:
        BadLevelError: unless 0 <= k <= level
    """
    if not 0 <= k <= gamma.level:
        raise BadLevelError(f"k must lie in [0, {gamma.level}], got {k}", {"k": k, "level": gamma.level})
    prefixes: List[Word] = []
    runs: List[List[Word]] = []
    breakpoints: List[int] = []
    for idx, w in enumerate(gamma.nodes):
        head = w[:k]
        if not prefixes or prefixes[-1] != head:
            prefixes.append(head)
            runs.append([])
            breakpoints.append(idx)
        runs[-1].append(w[k:])
    return PathBlocks(
        projection=PathSeq(k, tuple(prefixes), gamma.edge_kind),
        blocks=tuple(PathSeq(gamma.level - k, tuple(run), gamma.edge_kind) for run in runs),
        breakpoints=tuple(breakpoints),
    )


def reassemble(blocks: PathBlocks) -> PathSeq:
    nodes = tuple(head + tail for head, block in zip(blocks.projection.nodes, blocks.blocks) for tail in block.nodes)
    level = blocks.projection.level + blocks.blocks[0].level
    return PathSeq(level, nodes, blocks.projection.edge_kind)


def concat(gamma1: PathSeq, gamma2: PathSeq, graph: LevelGraph) -> PathSeq:
    """gamma1 followed by gamma2, sharing the junction node when they meet there.

    Raises:
        NotJoinableError: if the levels differ or the end cells do not touch
    """
    if gamma1.level != gamma2.level or graph.level != gamma1.level:
        raise NotJoinableError("paths live on different levels", {"levels": [gamma1.level, gamma2.level]})
    a, b = gamma1.nodes[-1], gamma2.nodes[0]
    kind = "ell" if gamma1.edge_kind == gamma2.edge_kind == "ell" else "star"
    if a == b:
        return PathSeq(gamma1.level, gamma1.nodes + gamma2.nodes[1:], kind)
    if not graph.is_star_edge(a, b):
        raise NotJoinableError("end cells do not touch", {"from": list(a), "to": list(b)})
    if not graph.is_ell_edge(a, b):
        kind = "star"
    return PathSeq(gamma1.level, gamma1.nodes + gamma2.nodes, kind)


def fold(sys: ValidatedSystem, gamma: PathSeq, k: int) -> PathSeq:
    """The k-folding of gamma, a star path at level n - k.

    Block j lives in the cell [gamma]_k(j); it is carried back into the frame
    of [gamma]_k(1) by the edge reflections along the projection.

    Raises:
        BadLevelError: unless 0 <= k < level
        ProjectionNotEllError: if the projection is not an ell path
    """
    if k >= gamma.level:
        raise BadLevelError(f"folding needs k below the path level {gamma.level}", {"k": k})
    pieces = decompose(gamma, k)
    projection = pieces.projection.nodes
    upper = level_graph(sys, k) if k > 0 else None
    for a, b in zip(projection, projection[1:]):
        if not upper.is_ell_edge(a, b):
            raise ProjectionNotEllError(
                "projection is not an ell path", {"from": sys.format_word(a), "to": sys.format_word(b)})

    lower = level_graph(sys, gamma.level - k)
    folded: Optional[PathSeq] = None
    for j, block in enumerate(pieces.blocks):
        nodes = []
        for u in block.nodes:
            for step in range(j, 0, -1):
                u = group_action_on_words(sys, upper.edge_label(projection[step], projection[step - 1]), u)
            nodes.append(u)
        moved = PathSeq(lower.level, tuple(nodes), block.edge_kind)
        if folded is None:
            folded = moved
            continue
        try:
            folded = concat(folded, moved, lower)
        except NotJoinableError as err:
            raise InternalInconsistencyError("folded blocks do not join", err.details) from err
    return PathSeq(folded.level, folded.nodes, "star")


def h_set(sys: ValidatedSystem, u: Word, n1: int, n2: int, m: int) -> FrozenSet[Word]:
    """H_{n1,n2,m}(u): level-m words v g(sigma_{n1}(u)), extended or truncated to length m.

    Raises:
        BadIndicesError: unless 0 <= n1 <= |u| and n2, m >= 0
    """
    if not 0 <= n1 <= len(u) or n2 < 0 or m < 0:
        raise BadIndicesError("need 0 <= n1 <= |u| and n2, m >= 0", {"u": list(u), "n1": n1, "n2": n2, "m": m})
    tail = u[n1:]
    l = m - n2 - len(tail)
    out = set()
    moved = {group_action_on_words(sys, g, tail) for g in sys.group}
    for v in product(range(sys.N), repeat=n2):
        for t in moved:
            w = v + t
            if l >= 0:
                out.update(w + s for s in product(range(sys.N), repeat=l))
            else:
                out.add(w[:m])
    return frozenset(out)


def h_star(sys: ValidatedSystem, gamma: PathSeq, w: Word) -> FrozenSet[Word]:
    """H_{|w|,0,m} over the nodes of a corridor path of w."""
    m = gamma.level - len(w)
    out = set()
    for u in gamma.nodes:
        out |= h_set(sys, u, len(w), 0, m)
    return frozenset(out)


# Alternation

class Alternation(str, Enum):
    ALTERNATED = "alternated"
    NOT_ALTERNATED = "not_alternated"
    UNKNOWN = "unknown"


class _Region(NamedTuple):
    lo: CycloNumber
    hi: CycloNumber
    owner: int


def _position(sys: ValidatedSystem, z: CycloNumber, side: int) -> CycloNumber:
    """Arc position of z on the boundary: side index plus the fraction along b_side."""
    a, b = sys.polygon.edge(side)
    d = b - a
    return sys.polygon.dot(z - a, d) / sys.polygon.dot(d, d) + side


def _regions(sys: ValidatedSystem, A: Iterable[Word], owner: int) -> List[_Region]:
    """Pieces of the boundary that hold points of K(A) and cover all of K(A) there."""
    vk = vertex_in_K(sys).in_K
    J = sys.J
    out = []
    for w in A:
        f = sys.word_contraction(w)
        for k, i in enumerate(word_xi(sys, w)):
            if i is None:
                continue
            ends = sorted((_position(sys, f.vertices[(k - 1) % J], i), _position(sys, f.vertices[k], i)),
                          key=cmp_to_key(compare))
            out.append(_Region(ends[0], ends[1], owner))
        for c in vk:
            z = f.vertices[c]
            sides = sorted(sys.polygon.boundary_sides(z))
            if not sides:
                continue
            # a corner p_i sits at position i + 1, identified with i + 1 - J on the last side
            t = _position(sys, z, sides[0])
            if compare(t, t.field.rational(J)) == 0:
                t = t.field.zero()
            out.append(_Region(t, t, owner))
    return out


def _meets(a: _Region, b: _Region, J: int) -> bool:
    field = a.lo.field
    for shift in (-J, 0, J):
        lo, hi = b.lo + field.rational(shift), b.hi + field.rational(shift)
        if compare(a.lo, hi) <= 0 and compare(lo, a.hi) <= 0:
            return True
    return False


def _owner_changes(regions: Sequence[_Region]) -> int:
    ordered = sorted(regions, key=cmp_to_key(lambda x, y: compare(x.lo, y.lo) or compare(x.hi, y.hi)))
    owners = [r.owner for r in ordered]
    return sum(1 for i in range(len(owners)) if owners[i] != owners[(i + 1) % len(owners)])


def alternated(sys: ValidatedSystem, A: Iterable[Word], B: Iterable[Word]) -> Alternation:
    """Certificate for A and B alternating along the boundary of Q_*.

    ALTERNATED when K(A) and K(B) share a known boundary point of K, or when
    four pairwise disjoint boundary pieces, each holding points of K, occur
    in the cyclic order A, B, A, B. NOT_ALTERNATED when one side has no boundary
    points or the pieces of A and of B occupy two disjoint arcs. Otherwise
    UNKNOWN.
    """
    J = sys.J
    ra, rb = _regions(sys, A, 0), _regions(sys, B, 1)
    if not ra or not rb:
        return Alternation.NOT_ALTERNATED
    points_a = {r.lo for r in ra if r.lo == r.hi}
    if any(r.lo == r.hi and r.lo in points_a for r in rb):
        return Alternation.ALTERNATED

    clear_a = [r for r in ra if not any(_meets(r, s, J) for s in rb)]
    clear_b = [s for s in rb if not any(_meets(s, r, J) for r in ra)]
    if clear_a and clear_b and _owner_changes(clear_a + clear_b) >= 4:
        return Alternation.ALTERNATED
    if len(clear_a) == len(ra) and len(clear_b) == len(rb) and _owner_changes(ra + rb) == 2:
        return Alternation.NOT_ALTERNATED
    return Alternation.UNKNOWN


# Corridor paths

def corridor(sys: ValidatedSystem, w: Word, M: int, m: int) -> Tuple[LevelGraph, FrozenSet[Word], FrozenSet[Word], FrozenSet[Word]]:
    """Level-(|w|+m) graph with the inner set S^m(w), the corridor S^m(Gamma_M(w) minus w)
    and the outer set S^m(Gamma_M(w)^c)."""
    n = len(w)
    ball = gamma_ball(level_graph(sys, n), w, M)
    graph = level_graph(sys, n + m)
    inner, middle, outer = set(), set(), set()
    for x in graph.nodes:
        head = x[:n]
        if head == w:
            inner.add(x)
        elif head in ball:
            middle.add(x)
        else:
            outer.add(x)
    return graph, frozenset(inner), frozenset(middle), frozenset(outer)


def sample_corridor_paths(sys: ValidatedSystem, w: Word, M: int, m: int, count: int,
                          rng_seed: Optional[int] = None, attempts: Optional[int] = None,
                          edge_kind: str = "star") -> List[PathSeq]:
    """Random members of C_{M,m}(w): simple star paths in the corridor from a cell
    touching S^m(w) to a cell touching S^m(Gamma_M(w)^c).

    With edge_kind="ell" the walk only takes ell edges.

    Raises:
        NoneFoundError: if nothing is found within the attempt budget
    """
    rng = np.random.default_rng(settings.default_seed if rng_seed is None else rng_seed)
    attempts = attempts or settings.path_attempts
    graph, inner, middle, outer = corridor(sys, w, M, m)
    if not outer:
        raise NoneFoundError("Gamma_M(w) covers the whole level", {"w": sys.format_word(w), "M": M})
    entries = sorted(x for x in middle if graph.star_neighbors(x) & inner)
    exits = {x for x in middle if graph.star_neighbors(x) & outer}
    if not entries or not exits:
        raise NoneFoundError("the corridor does not join the inner and outer sets", {"w": sys.format_word(w), "M": M})

    step = graph.ell_neighbors if edge_kind == "ell" else graph.star_neighbors
    found: List[PathSeq] = []
    for _ in range(attempts):
        if len(found) >= count:
            break
        path = [entries[rng.integers(len(entries))]]
        seen = {path[0]}
        while True:
            if path[-1] in exits and rng.random() < 0.25:
                found.append(PathSeq(graph.level, tuple(path), edge_kind))
                break
            options = sorted((step(path[-1]) & middle) - seen)
            if not options:
                if path[-1] in exits:
                    found.append(PathSeq(graph.level, tuple(path), edge_kind))
                break
            nxt = options[rng.integers(len(options))]
            path.append(nxt)
            seen.add(nxt)
    if not found:
        raise NoneFoundError("no corridor path found", {"w": sys.format_word(w), "M": M, "attempts": attempts})
    logger.debug(f"{sys.name}: sampled {len(found)} corridor paths around {sys.format_word(w)}")
    return found


def is_corridor_path(sys: ValidatedSystem, gamma: PathSeq, w: Word, M: int) -> bool:
    """Membership in C_{M,m}(w) by definition."""
    m = gamma.level - len(w)
    graph, inner, middle, outer = corridor(sys, w, M, m)
    if not all(x in middle for x in gamma.nodes):
        return False
    if any(not graph.is_star_edge(a, b) for a, b in zip(gamma.nodes, gamma.nodes[1:])):
        return False
    return bool(graph.star_neighbors(gamma.nodes[0]) & inner) and bool(graph.star_neighbors(gamma.nodes[-1]) & outer)


def random_ell_path(graph: LevelGraph, rng: np.random.Generator, length: int) -> PathSeq:
    """A simple random walk along ell edges, stopping early at a dead end."""
    nodes = [graph.nodes[rng.integers(len(graph.nodes))]]
    seen = {nodes[0]}
    while len(nodes) < length:
        options = sorted(graph.ell_neighbors(nodes[-1]) - seen)
        if not options:
            break
        nodes.append(options[rng.integers(len(options))])
        seen.add(nodes[-1])
    return PathSeq(graph.level, tuple(nodes), "ell")


def folded_trace_check(sys: ValidatedSystem, gamma: PathSeq, n: int) -> Optional[dict]:
    """Essential boundary trace of the n-folded interior of gamma.

    The interior drops the first and last level-n blocks, so the folding is taken
    in the frame of the second projected cell. Returns None when gamma does not
    qualify: its level-n projection must be an ell path whose last cell lies
    outside the M_J-ball of the first. Otherwise ok is True when the trace has
    at least three sides, or J is even and it is an opposite pair.
    """
    J = sys.J
    pieces = decompose(gamma, n)
    projection = pieces.projection.nodes
    upper = level_graph(sys, n)
    if any(not upper.is_ell_edge(a, b) for a, b in zip(projection, projection[1:])):
        return None
    if projection[-1] in gamma_ball(upper, projection[0], neighborhood_radius(J)):
        return None
    if len(pieces.blocks) < 3:
        return None
    interior = PathSeq(gamma.level, gamma.nodes[pieces.breakpoints[1]:pieces.breakpoints[-1]], gamma.edge_kind)
    folded = fold(sys, interior, n)
    trace = boundary_trace(sys, folded.nodes) & essential_boundary(sys)
    opposite = J % 2 == 0 and len(trace) == 2 and SubsetZJ.of(J, [min(trace), min(trace) + J // 2]) == trace
    return {
        "trace": trace.to_list(),
        "ok": len(trace) >= 3 or opposite,
        "folded": [sys.format_word(u) for u in folded.nodes],
    }
