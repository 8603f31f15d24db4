"""Discrete p-energies and conductance scaling on the level graphs.

All values here are floating point estimates at finite levels.
"""
import csv
import math
from typing import Callable, Dict, Hashable, Iterable, List, Mapping, NamedTuple, Optional, Sequence, TextIO, Tuple

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, spsolve

from polyfract.config.settings import settings
from polyfract.core.exceptions import (
    BadBracketError,
    DegenerateEdgeError,
    InvalidInputError,
    NonConvergenceError,
)
from polyfract.core.workers import ordered_map
from polyfract.schemas.schemas import DimarBracket, EnergyRow, ScalingEstimate
from polyfract.services.conditions import neighborhood_radius
from polyfract.services.system import ValidatedSystem, Word, group_action_on_words
from polyfract.services.wordtree import gamma_ball, level_graph

Node = Hashable


class EnergyProblem(NamedTuple):
    nodes: Tuple[Node, ...]
    edges: Tuple[Tuple[Node, Node], ...]
    one: frozenset
    zero: frozenset
    p: float


class EnergySolution(NamedTuple):
    value: float
    minimizer: Dict[Node, float]
    iterations: int
    residual: float
    eps_trace: Tuple[float, ...] = ()


def p_energy(f: Mapping[Node, float], edges: Iterable[Tuple[Node, Node]], p: float) -> float:
    """Sum of |f(u) - f(v)|^p over undirected edges, each pair once."""
    seen = set()
    total = 0.0
    for u, v in edges:
        key = frozenset((u, v))
        if key in seen or u == v:
            continue
        seen.add(key)
        total += abs(f[u] - f[v]) ** p
    return total


def _check_p(p: float):
    if not p > 1:
        raise InvalidInputError(f"p must be greater than 1, got {p}", {"p": p})


def _unique_edges(index: Mapping[Node, int], edges: Iterable[Tuple[Node, Node]]) -> np.ndarray:
    pairs = {tuple(sorted((index[u], index[v]))) for u, v in edges if u != v}
    return np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)


def _incidence(pairs: np.ndarray, n: int) -> sp.csr_matrix:
    """Signed edge-node incidence matrix, one row per edge."""
    rows = np.repeat(np.arange(len(pairs)), 2)
    cols = pairs.reshape(-1)
    data = np.tile([1.0, -1.0], len(pairs))
    return sp.csr_matrix((data, (rows, cols)), shape=(len(pairs), n))


def _eps_schedule(p: float) -> List[float]:
    stages = max(settings.eps_stages, 1)
    if stages == 1:
        return [settings.eps_final]
    ratio = (settings.eps_final / settings.eps_start) ** (1.0 / (stages - 1))
    return [settings.eps_start * ratio ** k for k in range(stages)]


def _newton(B: sp.csr_matrix, d0: np.ndarray, p: float, x: np.ndarray,
            c: Optional[np.ndarray] = None) -> Tuple[np.ndarray, int, Tuple[float, ...]]:
    """Minimize sum_e (d_e^2 + eps^2)^(p/2), d = B x + d0, by damped Newton with
    eps continuation. With c, x stays on the hyperplane c.x = c.x0."""
    iterations = 0
    trace = []
    n = B.shape[1]
    for eps in _eps_schedule(p):
        trace.append(eps)

        def phi(y: np.ndarray) -> float:
            d = B @ y + d0
            return float(np.sum((d * d + eps * eps) ** (p / 2)))

        value = phi(x)
        for _ in range(settings.newton_max_iter):
            iterations += 1
            d = B @ x + d0
            s = d * d + eps * eps
            grad = B.T @ (p * s ** (p / 2 - 1) * d)
            weight = p * s ** (p / 2 - 2) * ((p - 1) * d * d + eps * eps)
            H = (B.T @ sp.diags(weight) @ B).tocsc()
            if c is None:
                step = np.atleast_1d(spsolve(H, -grad))
            else:
                kkt = sp.bmat([[H, sp.csc_matrix(c.reshape(-1, 1))], [sp.csc_matrix(c.reshape(1, -1)), None]]).tocsc()
                step = np.atleast_1d(spsolve(kkt, np.concatenate([-grad, [0.0]])))[:n]
            slope = float(grad @ step)
            if slope >= 0:
                break
            t = 1.0
            while True:
                trial = phi(x + t * step)
                if trial <= value + 1e-4 * t * slope or t < 1e-12:
                    break
                t *= 0.5
            x = x + t * step
            change = abs(value - trial)
            value = trial
            if change <= settings.energy_rtol * max(value, 1e-300):
                break
        else:
            logger.error(f"Newton did not settle at eps={eps:.1e} after {settings.newton_max_iter} steps")
            raise NonConvergenceError(
                "energy minimization hit the iteration cap", {"eps": eps, "p": p, "iterations": iterations})
    return x, iterations, tuple(trace)


def min_energy(prob: EnergyProblem) -> EnergySolution:
    """Minimize the p-energy with f = 1 on prob.one and f = 0 on prob.zero.

    Raises:
        InvalidInputError: p <= 1 or overlapping boundary sets
        NonConvergenceError: the solver hit its iteration cap
    """
    _check_p(prob.p)
    if prob.one & prob.zero:
        raise InvalidInputError("boundary sets overlap", {"shared": len(prob.one & prob.zero)})
    nodes = list(prob.nodes)
    index = {u: k for k, u in enumerate(nodes)}
    pairs = _unique_edges(index, prob.edges)
    n = len(nodes)
    values = np.zeros(n)
    fixed = np.zeros(n, dtype=bool)
    for u in prob.one:
        values[index[u]], fixed[index[u]] = 1.0, True
    for u in prob.zero:
        fixed[index[u]] = True

    # components without boundary nodes stay at 0
    adjacency = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) else sp.coo_matrix((n, n))
    _, labels = connected_components(adjacency, directed=False)
    anchored = set(labels[fixed])
    free = np.array([k for k in range(n) if not fixed[k] and labels[k] in anchored], dtype=np.int64)

    iterations, residual, trace = 0, 0.0, ()
    if len(free) and len(pairs):
        B = _incidence(pairs, n)
        B_free = B[:, free]
        d0 = B @ values
        if prob.p == 2:
            A = (B_free.T @ B_free).tocsr()
            b = -(B_free.T @ d0)
            x, info = cg(A, b, rtol=settings.cg_rtol, atol=0.0, maxiter=10 * len(free) + 100)
            if info != 0:
                raise NonConvergenceError("conjugate gradient did not converge", {"info": int(info), "size": len(free)})
            norm = np.linalg.norm(b)
            residual = float(np.linalg.norm(A @ x - b) / norm) if norm > 0 else 0.0
        else:
            start = _two_harmonic_start(B_free, d0)
            x, iterations, trace = _newton(B_free, d0, prob.p, start)
        values[free] = np.clip(x, 0.0, 1.0)

    f = {u: float(values[index[u]]) for u in nodes}
    return EnergySolution(p_energy(f, prob.edges, prob.p), f, iterations, residual, trace)


def _two_harmonic_start(B_free: sp.csr_matrix, d0: np.ndarray) -> np.ndarray:
    A = (B_free.T @ B_free).tocsc()
    return np.clip(np.atleast_1d(spsolve(A, -(B_free.T @ d0))), 0.0, 1.0)


# Conductance constants

def _star_problem(sys: ValidatedSystem, level: int, one: Iterable[Word], zero: Iterable[Word], p: float) -> EnergyProblem:
    graph = level_graph(sys, level)
    return EnergyProblem(graph.nodes, graph.star_edges, frozenset(one), frozenset(zero), p)


def conductance_constant(sys: ValidatedSystem, w: Word, M: int, p: float, m: int) -> float:
    """E_{M,p,m}(w): minimal p-energy at level |w| + m with f = 1 on S^m(w) and
    f = 0 on S^m(Gamma_M(w)^c); 0 when the ball is everything."""
    n = len(w)
    ball = gamma_ball(level_graph(sys, n), w, M)
    if len(ball) == sys.N ** n:
        return 0.0
    graph = level_graph(sys, n + m)
    one = [x for x in graph.nodes if x[:n] == w]
    zero = [x for x in graph.nodes if x[:n] not in ball]
    return min_energy(_star_problem(sys, n + m, one, zero, p)).value


def representatives(sys: ValidatedSystem, words: Iterable[Word]) -> List[Word]:
    """One word per G-orbit, the smallest."""
    seen, reps = set(), []
    for w in sorted(words):
        if w in seen:
            continue
        reps.append(w)
        seen.update(group_action_on_words(sys, g, w) for g in sys.group)
    return reps


def base_level(sys: ValidatedSystem, M: int, limit: int = 4) -> int:
    """Smallest level at which some M-ball misses part of the level."""
    for n in range(1, limit + 1):
        graph = level_graph(sys, n)
        if any(len(gamma_ball(graph, w, M)) < len(graph.nodes) for w in graph.nodes):
            return n
    raise InvalidInputError(f"every {M}-ball covers its level up to level {limit}", {"M": M})


def default_M(sys: ValidatedSystem) -> int:
    return max(1, neighborhood_radius(sys.J))


# Neighbor disparity

def edge_disparity(sys: ValidatedSystem, w: Word, v: Word, m: int, p: float) -> float:
    """sup_f |mean_{S^m(w)} f - mean_{S^m(v)} f|^p / E(f) over S^m({w, v}).

    Raises:
        DegenerateEdgeError: if a mean difference costs no energy
    """
    _check_p(p)
    n = len(w)
    graph = level_graph(sys, n + m)
    cells = [x for x in graph.nodes if x[:n] in (w, v)]
    index = {x: k for k, x in enumerate(cells)}
    pairs = _unique_edges(index, ((a, b) for a, b in graph.star_edges if a in index and b in index))
    size = len(cells)
    c = np.array([(1.0 if x[:n] == w else -1.0) / sys.N ** m for x in cells])

    adjacency = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(size, size)) if len(pairs) else sp.coo_matrix((size, size))
    count, labels = connected_components(adjacency, directed=False)
    if count > 1 and any(abs(c[labels == k].sum()) > 1e-12 for k in range(count)):
        raise DegenerateEdgeError("cell means separate at zero energy",
                                  {"w": sys.format_word(w), "v": sys.format_word(v), "m": m})

    # one grounded node per component fixes the additive constant
    grounded = {int(np.flatnonzero(labels == k)[0]) for k in range(count)}
    keep = np.array([k for k in range(size) if k not in grounded], dtype=np.int64)
    B = _incidence(pairs, size)[:, keep]
    c_r = c[keep]
    if p == 2:
        A = (B.T @ B).tocsr()
        y, info = cg(A, c_r, rtol=settings.cg_rtol, atol=0.0, maxiter=10 * size + 100)
        if info != 0:
            raise NonConvergenceError("conjugate gradient did not converge", {"info": int(info)})
        return float(c_r @ y)
    start = c_r / float(c_r @ c_r)
    x, _, _ = _newton(B.tocsr(), np.zeros(B.shape[0]), p, start, c=c_r)
    energy = float(np.sum(np.abs(B @ x) ** p))
    return 1.0 / energy


def neighbor_disparity(sys: ValidatedSystem, n: int, m: int, p: float, workers: Optional[int] = None) -> float:
    """sigma_{p,m,n}: the largest edge disparity over star edges of level n, one
    per G-orbit of edges; +inf if some edge is degenerate."""
    graph = level_graph(sys, n)
    seen, reps = set(), []
    for w, v in sorted(graph.star_edges):
        if (w, v) in seen:
            continue
        reps.append((w, v))
        for g in sys.group:
            a, b = group_action_on_words(sys, g, w), group_action_on_words(sys, g, v)
            seen.update(((a, b), (b, a)))

    def one(edge):
        try:
            return edge_disparity(sys, edge[0], edge[1], m, p)
        except DegenerateEdgeError as err:
            logger.warning(f"{sys.name}: {err.message} {err.details}")
            return math.inf

    return max(ordered_map(one, reps, workers), default=0.0)


# Scaling

def scaling_estimate(sys: ValidatedSystem, p: float, M: Optional[int] = None, m_max: int = 3,
                     n: Optional[int] = None, workers: Optional[int] = None) -> ScalingEstimate:
    """E(m) = max over orbit representatives w in T_n of E_{M,p,m}(w), for m = 1..m_max,
    with ratios E(m)/E(m-1) and roots E(m)^(1/m)."""
    _check_p(p)
    M = M or default_M(sys)
    n = n or base_level(sys, M)
    reps = representatives(sys, level_graph(sys, n).nodes)
    jobs = [(w, m) for m in range(1, m_max + 1) for w in reps]
    results = ordered_map(lambda job: conductance_constant(sys, job[0], M, p, job[1]), jobs, workers)
    values: Dict[int, float] = {}
    for (w, m), value in zip(jobs, results):
        values[m] = max(values.get(m, 0.0), value)
    ratios = {m: values[m] / values[m - 1] for m in values if m >= 2 and values[m - 1] > 0}
    roots = {m: values[m] ** (1.0 / m) for m in values}
    logger.info(f"{sys.name}: p={p} M={M} n={n} conductance {values}")
    return ScalingEstimate(p=p, M=M, values=values, ratios=ratios, roots=roots)


def scaling_rows(sys: ValidatedSystem, estimate: ScalingEstimate) -> List[EnergyRow]:
    rows = []
    for quantity, table in (("E", estimate.values), ("ratio", estimate.ratios), ("root", estimate.roots)):
        for m, value in sorted(table.items()):
            rows.append(EnergyRow(system=sys.name, p=estimate.p, M=estimate.M, m=m, quantity=quantity, value=value))
    return rows


def bisect_crossing(ratio: Callable[[float], float], p_lo: float, p_hi: float, tol: float) -> Tuple[float, float, int]:
    """Shrink [p_lo, p_hi] around the point where ratio crosses 1, ratio(p_lo) > 1 > ratio(p_hi)."""
    steps = 0
    while p_hi - p_lo > tol:
        mid = 0.5 * (p_lo + p_hi)
        if ratio(mid) > 1:
            p_lo = mid
        else:
            p_hi = mid
        steps += 1
    return p_lo, p_hi, steps


def dimar_bracket(sys: ValidatedSystem, p_lo: float, p_hi: float, tol: float = 0.1,
                  M: Optional[int] = None, m_max: int = 3, workers: Optional[int] = None) -> DimarBracket:
    """Interval around the p where the level-m_max ratio crosses 1.

    Raises:
        BadBracketError: unless ratio(p_lo) > 1 > ratio(p_hi)
    """
    M = M or default_M(sys)
    if not 1 < p_lo < p_hi:
        raise BadBracketError("need 1 < p_lo < p_hi", {"p_lo": p_lo, "p_hi": p_hi})
    if tol >= p_hi - p_lo:
        return DimarBracket(p_lo=p_lo, p_hi=p_hi, M=M, m_max=m_max, steps=0)

    def ratio(p: float) -> float:
        estimate = scaling_estimate(sys, p, M, m_max, workers=workers)
        if m_max not in estimate.ratios:
            raise BadBracketError("no ratio at the top level", {"p": p, "m_max": m_max})
        return estimate.ratios[m_max]

    lo_ratio, hi_ratio = ratio(p_lo), ratio(p_hi)
    if not lo_ratio > 1 > hi_ratio:
        raise BadBracketError(
            "ratio does not cross 1 inside the bracket", {"ratio_lo": lo_ratio, "ratio_hi": hi_ratio})
    lo, hi, steps = bisect_crossing(ratio, p_lo, p_hi, tol)
    return DimarBracket(p_lo=lo, p_hi=hi, M=M, m_max=m_max, steps=steps)


def two_cell_energy(sys: ValidatedSystem, u: Word, v: Word, m: int, p: float) -> float:
    """E_{p,m}(u, v, T_k) for distinct u, v of the same level k."""
    k = len(u)
    graph = level_graph(sys, k + m)
    one = [x for x in graph.nodes if x[:k] == u]
    zero = [x for x in graph.nodes if x[:k] == v]
    return min_energy(_star_problem(sys, k + m, one, zero, p)).value


def knight_ratio(sys: ValidatedSystem, p: float, M: Optional[int], m: int, k: int = 1,
                 workers: Optional[int] = None) -> float:
    """max_z E_{M,p,m}(z) over level-1 representatives, divided by the smallest
    nonzero E_{p,m}(u, v, T_k) over distinct u, v in T_k."""
    M = M or default_M(sys)
    reps = representatives(sys, level_graph(sys, 1).nodes)
    top = max(ordered_map(lambda z: conductance_constant(sys, z, M, p, m), reps, workers), default=0.0)
    words = level_graph(sys, k).nodes
    pairs = [(u, v) for i, u in enumerate(words) for v in words[i + 1:]]
    bottom = [e for e in ordered_map(lambda uv: two_cell_energy(sys, uv[0], uv[1], m, p), pairs, workers) if e > 0]
    if not bottom:
        return math.inf
    return top / min(bottom)


def bounded_product(sys: ValidatedSystem, p: float, M: Optional[int], ms: Sequence[int], ns: Sequence[int]) -> Dict[Tuple[int, int], float]:
    """E_{M,p,m} times sigma_{p,m,n} over the given (m, n)."""
    M = M or default_M(sys)
    out = {}
    for m in ms:
        e = scaling_estimate(sys, p, M, m).values[m]
        for n in ns:
            out[(m, n)] = e * neighbor_disparity(sys, n, m, p)
    return out


def write_energy_csv(rows: Iterable[EnergyRow], stream: TextIO):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["system", "p", "M", "m", "quantity", "value", "iterations", "residual"])
    for row in rows:
        writer.writerow([row.system, repr(row.p), row.M, row.m, row.quantity, repr(row.value), row.iterations, repr(row.residual)])
