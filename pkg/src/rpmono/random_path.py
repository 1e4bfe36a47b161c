"""Generalized random path model: configurations, local statistics, weights,
loop decomposition, exhaustive enumeration and a worm Monte Carlo.

A configuration assigns to each edge e a number m_e of links, a colour in
{1..N} to each link, and at each vertex a partition of the incident link ends
into singletons and pairs.  Its weight is

    prod_e beta^{m_e} / m_e!  *  prod_x U(u_x, v_x, K_x, n_x, t_x).

Links are referenced as (edge, k) with 0 <= k < m_e.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from rpmono import _fallback, kernels
from rpmono.lattice import TorusGeometry
from rpmono.tables import TwoPointTable

SPIN_SOURCE = "spin_source"
CROSSING = "crossing"
KINDS = (SPIN_SOURCE, CROSSING)

Link = tuple[int, int]


class EnumerationBudgetError(RuntimeError):
    pass


class ErgodicityError(ValueError):
    pass


@dataclass(frozen=True)
class LocalStats:
    u: tuple[int, ...]
    v: tuple[int, ...]
    K: int
    n: int
    t: int

    def key(self) -> tuple:
        return (self.u, self.v, self.K, self.n, self.t)

    @property
    def degree(self) -> int:
        """Number of incident links (singletons count once, pairs twice)."""
        nu = sum(self.u)
        return nu + 2 * (self.n - nu)


def stats_from_blocks(N: int, blocks: Sequence[Sequence[tuple[int, int]]]) -> LocalStats:
    """Local statistics from blocks of (edge, colour) link descriptors."""
    u = [0] * N
    v = [0] * N
    K = t = 0
    for b in blocks:
        if len(b) == 1:
            u[b[0][1] - 1] += 1
        else:
            (e1, c1), (e2, c2) = b
            if c1 == c2:
                v[c1 - 1] += 1
            else:
                K += 1
            if e1 == e2:
                t += 1
    if K:
        v = [0] * N
    return LocalStats(tuple(u), tuple(v), K, len(blocks), t)


@dataclass
class WeightFunction:
    """Vertex weight U as a function of the local statistics.

    ``max_degree`` (if known) lets the enumerator and the worm prune
    configurations where U must vanish.
    """

    name: str
    N: int
    fn: Callable[[LocalStats], float]
    max_degree: int | None = None
    params: dict = field(default_factory=dict)
    identity_factor: float | None = None

    def __call__(self, s: LocalStats) -> float:
        w = float(self.fn(s))
        if w < 0 or not math.isfinite(w):
            raise ValueError(f"weight function {self.name} returned {w} (must be finite and >= 0)")
        return w

    @classmethod
    def from_table(cls, N: int, table: dict, max_degree: int | None = None, name="table"):
        """User weights: keys are LocalStats.key() tuples, missing keys weigh 0."""
        tab = {tuple(k): float(v) for k, v in table.items()}
        return cls(name, N, lambda s: tab.get(s.key(), 0.0), max_degree)


def loop_on(N: int, sources: bool = False, max_pairings: int = 1) -> WeightFunction:
    """Monochromatic loops; with ``sources`` a single unpaired colour-1 link is allowed.

    U = 1 on allowed patterns: no cross-colour pairings, no same-edge pairings,
    at most ``max_pairings`` partition elements.
    """

    def fn(s: LocalStats) -> float:
        if s.K or s.t or s.n > max_pairings:
            return 0.0
        nu = sum(s.u)
        if nu == 0:
            return 1.0
        if sources and nu == 1 and s.u[0] == 1:
            return 1.0
        return 0.0

    return WeightFunction("loop_on", N, fn, 2 * max_pairings,
                          {"sources": sources, "max_pairings": max_pairings})


def crossing_on(N: int, crossing_weight: float | None = None) -> WeightFunction:
    """Loops with at most one pairing per vertex; a cross-colour pairing weighs ``crossing_weight``.

    The default sqrt(N) makes G(o,x) = 2 C(N,2) P(o <-> x) for x != o; with
    weight w the factor is (N - 1) w^2.
    """
    cw = math.sqrt(N) if crossing_weight is None else float(crossing_weight)

    def fn(s: LocalStats) -> float:
        if sum(s.u) or s.t or s.n > 1:
            return 0.0
        return cw if s.K == 1 else 1.0

    factor = (N - 1) * cw * cw
    return WeightFunction("crossing_on", N, fn, 2, {"crossing_weight": cw}, identity_factor=factor)


PRESETS = {"loop_on": loop_on, "crossing_on": crossing_on}


@dataclass
class RPMParams:
    geometry: TorusGeometry
    N: int
    beta: float
    U: WeightFunction
    m_max: int = 1

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need N >= 1 colours")
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")
        if self.m_max < 0:
            raise ValueError("m_max must be >= 0")
        if self.U.N != self.N:
            raise ValueError("weight function built for a different N")

    def truncation_bound(self) -> float:
        """Per-edge weight discarded by the link cap: sum_{m > m_max} beta^m / m!."""
        kept = sum(self.beta**m / math.factorial(m) for m in range(self.m_max + 1))
        return max(math.exp(self.beta) - kept, 0.0)

    def describe(self) -> dict:
        return {"N": self.N, "beta": self.beta, "U": self.U.name, "U_params": self.U.params,
                "m_max": self.m_max, "geometry": self.geometry.metadata()}


@dataclass
class PathConfig:
    """Link counts m[e], colours c[e] (tuple of length m[e]) and pairings pi[x].

    pi[x] is a list of blocks, each a tuple of one or two links (edge, k).
    """

    geometry: TorusGeometry
    m: list[int]
    c: list[tuple[int, ...]]
    pi: list[list[tuple[Link, ...]]]

    def __post_init__(self):
        g = self.geometry
        if len(self.m) != g.n_edges or len(self.c) != g.n_edges or len(self.pi) != g.n_vertices:
            raise ValueError("configuration arrays do not match the torus")
        for e in range(g.n_edges):
            if self.m[e] < 0 or len(self.c[e]) != self.m[e]:
                raise ValueError(f"edge {e}: need one colour per link")
        for x in range(g.n_vertices):
            seen = []
            for b in self.pi[x]:
                if not 1 <= len(b) <= 2:
                    raise ValueError(f"vertex {x}: partition blocks hold one or two links")
                seen.extend(b)
            want = sorted(self.incident_links(x))
            if sorted(seen) != want:
                raise ValueError(f"vertex {x}: partition must cover each incident link once")

    @classmethod
    def empty(cls, g: TorusGeometry) -> "PathConfig":
        return cls(g, [0] * g.n_edges, [()] * g.n_edges, [[] for _ in range(g.n_vertices)])

    def incident_links(self, x: int) -> list[Link]:
        return [(int(e), k) for e in self.geometry.incident_edges[x] for k in range(self.m[int(e)])]

    def colour(self, link: Link) -> int:
        return self.c[link[0]][link[1]]

    @property
    def n_links(self) -> int:
        return sum(self.m)


def local_stats(w: PathConfig, x: int, N: int | None = None) -> LocalStats:
    if N is None:
        N = max([max(c) for c in w.c if c] + [1])
    blocks = [[(lk[0], w.colour(lk)) for lk in b] for b in w.pi[x]]
    return stats_from_blocks(N, blocks)


def config_weight(w: PathConfig, p: RPMParams) -> float:
    wt = 1.0
    for m in w.m:
        wt *= p.beta**m / math.factorial(m)
    for x in range(p.geometry.n_vertices):
        if wt == 0.0:
            break
        wt *= p.U(local_stats(w, x, p.N))
    return wt


@dataclass
class LoopDecomposition:
    loops: list[list[Link]]
    walks: list[tuple[list[Link], tuple[int, int]]]

    @property
    def total_length(self) -> int:
        return sum(len(lp) for lp in self.loops) + sum(len(wk) for wk, _ in self.walks)


def _partner_map(w: PathConfig):
    """(link, vertex) -> paired (link, vertex) at the same vertex, or None."""
    partner = {}
    for x, blocks in enumerate(w.pi):
        for b in blocks:
            if len(b) == 1:
                partner[(b[0], x)] = None
            else:
                partner[(b[0], x)] = (b[1], x)
                partner[(b[1], x)] = (b[0], x)
    return partner


def _other_end(g: TorusGeometry, link: Link, x: int) -> int:
    a, b = g.edges[link[0]]
    return int(b) if x == a else int(a)


def trace_loops(w: PathConfig) -> LoopDecomposition:
    """Split the configuration into closed loops and open walks, smallest link first."""
    g = w.geometry
    partner = _partner_map(w)
    used = set()
    walks = []
    starts = sorted((lk, x) for (lk, x), pt in partner.items() if pt is None)
    for lk, x in starts:
        if lk in used:
            continue
        seq = []
        cur, at = lk, x
        while True:
            used.add(cur)
            seq.append(cur)
            far = _other_end(g, cur, at)
            nxt = partner[(cur, far)]
            if nxt is None:
                walks.append((seq, (x, far)))
                break
            cur, at = nxt
    loops = []
    all_links = sorted((e, k) for e in range(g.n_edges) for k in range(w.m[e]))
    for lk in all_links:
        if lk in used:
            continue
        a = int(g.edges[lk[0]][0])
        seq = []
        cur, at = lk, a
        while cur not in used:
            used.add(cur)
            seq.append(cur)
            far = _other_end(g, cur, at)
            cur, at = partner[(cur, far)]
        loops.append(seq)
    return LoopDecomposition(loops, walks)


# ----------------------------------------------------------------------------
# exhaustive enumeration


def _matchings(n: int):
    """All partitions of range(n) into blocks of size <= 2."""
    if n == 0:
        yield []
        return
    for rest in _matchings(n - 1):
        yield rest + [(n - 1,)]
    for j in range(n - 1):
        others = [i for i in range(n - 1) if i != j]
        for rest in _matchings_of(others):
            yield rest + [(j, n - 1)]


def _matchings_of(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for m in _matchings_of(rest):
        yield [(first,)] + m
    for j, other in enumerate(rest):
        remaining = rest[:j] + rest[j + 1:]
        for m in _matchings_of(remaining):
            yield [(first, other)] + m


def _classify(kind: str, s: LocalStats) -> int:
    """0 = ordinary vertex, 1 = source/defect vertex, -1 = excluded."""
    nu = sum(s.u)
    if kind == CROSSING:
        if nu:
            return -1
        return 0 if s.K == 0 else (1 if s.K == 1 else -1)
    if nu == 0:
        return 0
    return 1 if (nu == 1 and s.u[0] == 1) else -1


def enumerate_two_point(p: RPMParams, kind: str, node_budget: int = 50_000_000) -> TwoPointTable:
    """Exact G(o, x) by summing the measure over all configurations with m_e <= m_max.

    spin_source: configurations with a single unpaired colour-1 link at o and
    at x, loops elsewhere, divided by the loops-only partition function.
    crossing: configurations with K = 1 exactly at o and x, divided by the
    monochromatic loops-only partition function; also returns the loop
    connection probability P(o <-> x) computed by tracing loops, and checks
    G = (N-1) w^2 P (= 2 C(N,2) P for the default crossing weight) for x != o.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if kind == CROSSING and p.N < 2:
        raise ValueError("the crossing observable needs N >= 2")
    g = p.geometry
    V, E, N = g.n_vertices, g.n_edges, p.N
    edges = [(int(a), int(b)) for a, b in g.edges]
    inc = [list(map(int, r)) for r in g.incident_edges]
    new_edges = [[] for _ in range(V)]
    for e, (a, b) in enumerate(edges):
        new_edges[min(a, b)].append(e)
    maxdeg = p.U.max_degree if p.U.max_degree is not None else p.m_max * g.coordination
    opts = [((), 1.0)]
    for m in range(1, p.m_max + 1):
        ew = p.beta**m / math.factorial(m)
        if ew == 0.0:
            break
        for cols in itertools.product(range(1, N + 1), repeat=m):
            opts.append((cols, ew))
    need_P = kind == CROSSING

    @lru_cache(maxsize=None)
    def local_options(sig):
        """Per class: (summed weight, list of (weight, blocks of positions))."""
        agg = [0.0, 0.0]
        explicit = [[], []]
        for blocks in _matchings(len(sig)):
            s = stats_from_blocks(N, [[sig[i] for i in b] for b in blocks])
            cls = _classify(kind, s)
            if cls < 0:
                continue
            wu = p.U(s)
            if wu == 0.0:
                continue
            agg[cls] += wu
            explicit[cls].append((wu, tuple(blocks)))
        return tuple(agg), (tuple(explicit[0]), tuple(explicit[1]))

    col: list[tuple[int, ...]] = [()] * E
    deg = [0] * V
    Z = 0.0
    Gacc = np.zeros(V)
    Pacc = np.zeros(V)
    nodes = 0
    chosen: list = [None] * V

    def links_at(v):
        out = []
        for e in inc[v]:
            for k in range(len(col[e])):
                out.append((e, k))
        return out

    def leaf_connect(w):
        # union-find over links; every end is paired in the ordinary sector
        parent = {}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in range(E):
            for k in range(len(col[e])):
                parent[(e, k)] = (e, k)
        for v in range(V):
            lks = links_at(v)
            for b in chosen[v]:
                if len(b) == 2:
                    ra, rb = find(lks[b[0]]), find(lks[b[1]])
                    if ra != rb:
                        parent[ra] = rb
        roots_o = {find(lk) for lk in links_at(0)}
        if not roots_o:
            return
        for v in range(V):
            if any(find(lk) in roots_o for lk in links_at(v)):
                Pacc[v] += w

    def complete(v, w, sector, x_def):
        nonlocal Z, nodes
        nodes += 1
        if nodes > node_budget:
            raise EnumerationBudgetError(f"enumeration exceeded {node_budget} nodes")
        sig = tuple((s, c) for s, e in enumerate(inc[v]) for c in col[e])
        agg, explicit = local_options(sig)
        choices = []
        if v == 0:
            choices = [(0, "Z"), (1, "D1")]
        elif sector == "D1":
            choices = [(0, "D1"), (1, "D2")]
        else:
            choices = [(0, sector)]
        for cls, new_sector in choices:
            if agg[cls] == 0.0:
                continue
            xd = v if (new_sector == "D2" and sector == "D1") else x_def
            if need_P and new_sector == "Z":
                for wu, blocks in explicit[cls]:
                    chosen[v] = blocks
                    advance(v + 1, w * wu, new_sector, xd)
                chosen[v] = None
            else:
                advance(v + 1, w * agg[cls], new_sector, xd)

    def advance(v, w, sector, x_def):
        nonlocal Z
        if v == V:
            if sector == "Z":
                Z += w
                if need_P:
                    leaf_connect(w)
            elif sector == "D1":
                Gacc[0] += w
            else:
                Gacc[x_def] += w
            return
        assign(v, 0, w, sector, x_def)

    def assign(v, j, w, sector, x_def):
        if j == len(new_edges[v]):
            complete(v, w, sector, x_def)
            return
        e = new_edges[v][j]
        a, b = edges[e]
        for cols, ew in opts:
            m = len(cols)
            if deg[a] + m > maxdeg or deg[b] + m > maxdeg:
                break
            col[e] = cols
            deg[a] += m
            deg[b] += m
            assign(v, j + 1, w * ew, sector, x_def)
            deg[a] -= m
            deg[b] -= m
        col[e] = ()

    advance(0, 1.0, None, -1)
    if Z <= 0.0:
        raise ArithmeticError("loops-only partition function vanished")
    G = Gacc / Z
    extra = {}
    meta = {"engine": "enumeration", "kind": kind, "Z": Z, "nodes": nodes,
            "truncation_bound_per_edge": p.truncation_bound(), **p.describe()}
    if need_P:
        P = Pacc / Z
        pair_factor = N * (N - 1)  # 2 C(N, 2)
        extra = {"p_connect": G / pair_factor, "P_loop": P}
        if p.U.identity_factor is not None:
            off = np.arange(V) != 0
            lhs = G[off]
            rhs = p.U.identity_factor * P[off]
            scale = np.maximum(np.abs(rhs), 1e-300)
            resid = float(np.max(np.abs(lhs - rhs) / scale)) if off.any() else 0.0
            meta["identity_residual"] = resid
            meta["identity_factor"] = p.U.identity_factor
            if resid > 1e-12 and np.max(np.abs(rhs)) > 0:
                raise ArithmeticError(f"G != {p.U.identity_factor:g} P (relative residual {resid:.2e})")
    return TwoPointTable(g, G, None, "enumeration", extra=extra, meta=meta)


def even_subgraph_partition(g: TorusGeometry, beta: float = 1.0, N: int = 1) -> float:
    """Brute-force sum over even subgraphs (m_e in {0,1}) of beta^|F| prod_x (deg_x - 1)!!.

    With N = 1 this is the loops-only partition function of loop_on with
    unlimited pairings; independent of the enumeration machinery.
    """
    if N != 1:
        raise ValueError("the subgraph formula covers a single colour")
    E = g.n_edges
    edges = np.asarray(g.edges)
    total = 0.0
    for mask in range(1 << E):
        deg = np.zeros(g.n_vertices, dtype=int)
        sel = [(mask >> e) & 1 for e in range(E)]
        for e in range(E):
            if sel[e]:
                deg[edges[e, 0]] += 1
                deg[edges[e, 1]] += 1
        if np.any(deg % 2):
            continue
        w = beta ** sum(sel)
        for d in deg:
            w *= math.prod(range(d - 1, 0, -2)) if d else 1
        total += w
    return total


# ----------------------------------------------------------------------------
# worm Monte Carlo


def worm_weight_tables(U: WeightFunction, kind: str):
    """Vertex weights by local pattern for configurations with m_e <= 1 and degree <= 2.

    Returns (W0, W1[c], W2[c1][c2]) with colour index 0 unused.  For the
    crossing observable the open-worm endpoints carry auxiliary weight 1.
    """
    N = U.N
    W0 = U(stats_from_blocks(N, []))
    W1 = np.zeros(N + 1)
    W2 = np.zeros((N + 1, N + 1))
    for c in range(1, N + 1):
        W1[c] = 1.0 if kind == CROSSING else U(stats_from_blocks(N, [[(0, c)]]))
        for c2 in range(1, N + 1):
            W2[c, c2] = U(stats_from_blocks(N, [[(0, c), (1, c2)]]))
    return W0, W1, W2


def _check_worm_support(p: RPMParams, kind: str):
    U = p.U
    if U.max_degree is None or U.max_degree > 2:
        raise ErgodicityError("the worm sampler supports weights vanishing above degree 2")
    # a pairing of two links on the same edge must be excluded
    N = p.N
    if U(stats_from_blocks(N, [[(0, 1), (0, 1)]])) != 0.0:
        raise ErgodicityError("the worm sampler needs U = 0 for same-edge pairings (t > 0)")
    W0, W1, W2 = worm_weight_tables(U, kind)
    if W0 <= 0 or any(W2[c, c] <= 0 for c in range(1, N + 1)):
        raise ErgodicityError("U must be positive on empty vertices and monochromatic pairs")
    if kind == SPIN_SOURCE and np.any(W2[1:, 1:][~np.eye(N, dtype=bool)] != 0):
        raise ErgodicityError("spin_source sampling supports monochromatic pairings only")
    if kind == SPIN_SOURCE and W1[1] <= 0:
        raise ErgodicityError("spin_source needs U > 0 for a single unpaired colour-1 link")
    if kind == CROSSING and N >= 2 and W2[1, 2] <= 0:
        raise ErgodicityError("crossing needs U > 0 for a cross-colour pairing")
    return W0, W1, W2


@dataclass
class WormChain:
    """Chain state plus the static arrays handed to the kernel."""

    p: RPMParams
    kind: str
    lam0: float = 1.0
    col: np.ndarray = field(init=False)
    deg: np.ndarray = field(init=False)
    st: np.ndarray = field(init=False)

    def __post_init__(self):
        g = self.p.geometry
        self.W0, self.W1, self.W2 = _check_worm_support(self.p, self.kind)
        self.col = np.zeros(g.n_edges, dtype=np.int64)
        self.deg = np.zeros(g.n_vertices, dtype=np.int64)
        self.st = np.array([_fallback.CLOSED, 0, 0, 0, -1, -1, 0, 0], dtype=np.int64)
        self.inc_edge = np.ascontiguousarray(g.incident_edges, dtype=np.int64)
        self.inc_nbr = np.ascontiguousarray(g.incident_neighbours, dtype=np.int64)
        self.coords = np.ascontiguousarray(g.all_coords(), dtype=np.int64)
        self.shape = np.array(g.shape, dtype=np.int64)
        self.kind_code = _fallback.SPIN_SOURCE if self.kind == SPIN_SOURCE else _fallback.CROSSING
        self.acc = np.zeros(10, dtype=np.int64)

    def run(self, uniforms, n_sweeps, steps_per_sweep, measure, backend=None):
        V = self.p.geometry.n_vertices
        zc = np.zeros(1, dtype=np.int64)
        gh = np.zeros(V, dtype=np.int64)
        ph = np.zeros(V, dtype=np.int64)
        k = kernels.get_backend(backend)
        k.worm_run(self.col, self.deg, self.st, self.inc_edge, self.inc_nbr, self.coords,
                   self.shape, self.kind_code, self.p.N, float(self.p.beta), float(self.lam0),
                   float(self.W0), self.W1, self.W2, uniforms, int(n_sweeps),
                   int(steps_per_sweep), bool(measure), zc, gh, ph, self.acc)
        return int(zc[0]), gh, ph

    def extended_weight(self) -> float:
        """Target weight of the current extended state (used by detailed-balance tests)."""
        S = _fallback.WormState(self.col, self.deg, self.st)
        return extended_weight(S, self)


def extended_weight(S, chain: WormChain) -> float:
    """beta^{#links} prod_x w(x), times lam0 in the closed mode."""
    g = chain.p.geometry
    w = chain.p.beta ** sum(1 for c in S.col if c)
    for v in range(g.n_vertices):
        cols = [S.col[int(e)] for e in g.incident_edges[v] if S.col[int(e)]]
        if len(cols) == 0:
            w *= chain.W0
        elif len(cols) == 1:
            w *= chain.W1[cols[0]]
        elif len(cols) == 2:
            w *= chain.W2[cols[0], cols[1]]
        else:
            return 0.0
    if S.mode == _fallback.CLOSED:
        w *= chain.lam0
    return w


def _jackknife_batches(num: np.ndarray, den: np.ndarray, scale: float):
    """Ratio scale * sum(num)/sum(den) over batches with leave-one-batch-out errors."""
    B = den.shape[0]
    tn = num.sum(axis=0)
    td = den.sum()
    est = scale * tn / td
    if B < 2:
        return est, np.zeros_like(est)
    loo = scale * (tn[None] - num) / (td - den)[:, None]
    var = (B - 1) / B * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0)
    return est, np.sqrt(var)


def worm_estimate(p: RPMParams, kind: str, sweeps: int, burn_in: int, seed: int,
                  n_batches: int = 32, lam0: float = 1.0, backend: str | None = None,
                  chunk_steps: int = 1 << 18) -> TwoPointTable:
    """Worm Monte Carlo estimate of G(o, x) (and P(o <-> x) for the crossing kind).

    ``sweeps`` counts all sweeps including ``burn_in``; one sweep is V
    proposals.  Errors come from a jackknife over ``n_batches`` batches.
    The uniform stream is numpy PCG64(seed), 6 numbers per proposal, so the
    compiled and Python backends produce identical chains.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if kind == CROSSING and p.N < 2:
        raise ValueError("the crossing observable needs N >= 2")
    sweeps, burn_in = int(sweeps), int(burn_in)
    if burn_in > sweeps:
        raise ValueError("burn_in exceeds the total number of sweeps")
    measured = sweeps - burn_in
    if measured < n_batches:
        raise ValueError(f"need at least {n_batches} measured sweeps")
    g = p.geometry
    V = g.n_vertices
    chain = WormChain(p, kind, lam0)
    rng = np.random.Generator(np.random.PCG64(seed))
    spw = V
    per_chunk = max(1, chunk_steps // spw)

    def advance(n, measure):
        zc, gh, ph = 0, np.zeros(V, dtype=np.int64), np.zeros(V, dtype=np.int64)
        while n > 0:
            k = min(n, per_chunk)
            u = rng.random(6 * spw * k)
            z, a, b = chain.run(u, k, spw, measure, backend)
            zc += z
            gh += a
            ph += b
            n -= k
        return zc, gh, ph

    advance(burn_in, False)
    sizes = [measured // n_batches] * n_batches
    sizes[-1] += measured - sum(sizes)
    Z = np.zeros(n_batches)
    GH = np.zeros((n_batches, V))
    PH = np.zeros((n_batches, V))
    for b, n in enumerate(sizes):
        Z[b], GH[b], PH[b] = advance(n, True)
    if Z.sum() == 0:
        raise ArithmeticError("chain never visited the loops-only sector; increase sweeps or lam0")
    gscale = lam0 if kind == SPIN_SOURCE else lam0 / V
    G, Gerr = _jackknife_batches(GH, Z, gscale)
    extra = {}
    if kind == CROSSING:
        P, Perr = _jackknife_batches(PH, Z, 1.0 / V)
        extra = {"P_loop": P, "P_loop_stderr": Perr}
    acc = chain.acc.reshape(5, 2)
    meta = {"engine": "worm", "kind": kind, "sweeps": sweeps, "burn_in": burn_in, "seed": seed,
            "n_batches": n_batches, "lam0": lam0, "backend": backend or kernels.BACKEND,
            "closed_fraction": float(Z.sum() / measured),
            "acceptance": {name: (int(a), int(b)) for name, (a, b) in
                           zip(("head", "swap", "recolour", "defect_pair", "defect_shift"), acc)},
            **p.describe()}
    return TwoPointTable(g, G, Gerr, "monte_carlo", extra=extra, meta=meta)
