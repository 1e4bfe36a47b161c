import itertools
import math
from collections import defaultdict, deque

import numpy as np
import pytest

from rpmono import _fallback as fb
from rpmono import random_path as rp
from rpmono.lattice import build_rectangular, build_torus


def edge_id(g, a, b):
    for e, (x, y) in enumerate(g.edges.tolist()):
        if {x, y} == {a, b}:
            return e
    raise KeyError((a, b))


def square_loop(g, colour=1):
    """Monochromatic loop around the unit square at the origin."""
    corners = [g.index(x) for x in ((0, 0), (1, 0), (1, 1), (0, 1))]
    es = [edge_id(g, corners[i], corners[(i + 1) % 4]) for i in range(4)]
    m = [0] * g.n_edges
    c = [()] * g.n_edges
    for e in es:
        m[e] = 1
        c[e] = (colour,)
    pi = [[] for _ in range(g.n_vertices)]
    for i, v in enumerate(corners):
        pi[v] = [((es[i - 1], 0), (es[i], 0))]
    return rp.PathConfig(g, m, c, pi), es


def test_local_stats():
    s = rp.stats_from_blocks(2, [[(0, 1), (1, 1)], [(2, 2)]])
    assert s.key() == ((0, 1), (1, 0), 0, 2, 0)
    assert s.degree == 3
    k = rp.stats_from_blocks(2, [[(0, 1), (1, 2)], [(2, 2), (3, 2)]])
    assert k.K == 1 and k.v == (0, 0)
    t = rp.stats_from_blocks(1, [[(4, 1), (4, 1)]])
    assert t.t == 1


def test_unit_square_weight():
    g = build_torus(2, 4)
    w, es = square_loop(g)
    p = rp.RPMParams(g, 1, 0.3, rp.loop_on(1), 1)
    assert math.isclose(rp.config_weight(w, p), 0.3**4, rel_tol=1e-15)
    assert rp.config_weight(rp.PathConfig.empty(g), p) == 1.0
    dec = rp.trace_loops(w)
    assert len(dec.loops) == 1 and not dec.walks
    assert sorted(lk[0] for lk in dec.loops[0]) == sorted(es)


def test_open_walk_traced():
    g = build_torus(2, 4)
    w, es = square_loop(g)
    # cut the loop at the origin: two singletons there
    w.pi[0] = [(lk,) for lk in w.pi[0][0]]
    dec = rp.trace_loops(w)
    assert not dec.loops
    (walk, ends), = dec.walks
    assert ends == (0, 0) and len(walk) == 4
    assert dec.total_length == 4


def test_path_config_validation():
    g = build_torus(2, 4)
    with pytest.raises(ValueError):
        rp.PathConfig(g, [1] + [0] * 31, [()] * 32, [[] for _ in range(16)])


def test_even_subgraph_oracle_matches_enumeration():
    g = build_rectangular((4, 2))
    p = rp.RPMParams(g, 1, 1.0, rp.loop_on(1, max_pairings=2), 1)
    ex = rp.enumerate_two_point(p, rp.SPIN_SOURCE)
    assert ex.meta["Z"] == rp.even_subgraph_partition(g, 1.0)
    p2 = rp.RPMParams(g, 1, 0.4, rp.loop_on(1, max_pairings=2), 1)
    assert math.isclose(rp.enumerate_two_point(p2, rp.SPIN_SOURCE).meta["Z"],
                        rp.even_subgraph_partition(g, 0.4), rel_tol=1e-13)


def brute_force(p, kind):
    """Direct sum over colourings and pairings (degree <= 2, m_e <= 1)."""
    g = p.geometry
    V, E = g.n_vertices, g.n_edges
    Z = 0.0
    G = np.zeros(V)
    P = np.zeros(V)
    for cols in itertools.product(range(p.N + 1), repeat=E):
        m = [1 if c else 0 for c in cols]
        deg = np.zeros(V, dtype=int)
        for e, (a, b) in enumerate(g.edges.tolist()):
            deg[a] += m[e]
            deg[b] += m[e]
        if deg.max() > 2:
            continue
        per_vertex = []
        for v in range(V):
            lks = [(int(e), 0) for e in g.incident_edges[v] if m[int(e)]]
            opts = [[(lk,) for lk in lks]]
            if len(lks) == 2:
                opts.append([tuple(lks)])
            per_vertex.append(opts)
        for pi in itertools.product(*per_vertex):
            w = rp.PathConfig(g, m, [(c,) if c else () for c in cols], [list(b) for b in pi])
            wt = rp.config_weight(w, p)
            if wt == 0.0:
                continue
            stats = [rp.local_stats(w, v, p.N) for v in range(V)]
            if kind == rp.CROSSING:
                if any(sum(s.u) for s in stats):
                    continue
                defects = [v for v in range(V) if stats[v].K == 1]
            else:
                defects = [v for v in range(V) if sum(stats[v].u)]
            if not defects:
                Z += wt
                if kind == rp.CROSSING:
                    for lp in rp.trace_loops(w).loops:
                        verts = {int(x) for lk in lp for x in g.edges[lk[0]]}
                        if 0 in verts:
                            P[sorted(verts)] += wt
            elif len(defects) == 2 and defects[0] == 0:
                G[defects[1]] += wt
    return G / Z, P / Z


@pytest.mark.parametrize("kind,U", [(rp.CROSSING, rp.crossing_on(2)),
                                    (rp.SPIN_SOURCE, rp.loop_on(2, sources=True))])
def test_enumeration_matches_brute_force(kind, U):
    p = rp.RPMParams(build_torus(2, 2), 2, 0.7, U, 1)
    ex = rp.enumerate_two_point(p, kind)
    G, P = brute_force(p, kind)
    assert np.allclose(ex.values, G, rtol=1e-12, atol=1e-15)
    if kind == rp.CROSSING:
        assert np.allclose(ex.extra["P_loop"], P, rtol=1e-12, atol=1e-15)


def test_crossing_identity():
    g = build_rectangular((4, 2))
    p = rp.RPMParams(g, 2, 0.5, rp.crossing_on(2), 1)
    ex = rp.enumerate_two_point(p, rp.CROSSING)
    assert ex.meta["identity_residual"] <= 1e-12
    # G = 2 C(2, 2) P for N = 2
    assert np.allclose(ex.values[1:], 2.0 * ex.extra["P_loop"][1:], rtol=1e-12)
    assert np.allclose(ex.extra["p_connect"], ex.values / 2.0)
    # a different crossing weight rescales the identity factor to (N - 1) w^2
    p3 = rp.RPMParams(g, 2, 0.5, rp.crossing_on(2, 0.5), 1)
    ex3 = rp.enumerate_two_point(p3, rp.CROSSING)
    assert np.allclose(ex3.values[1:], 0.25 * ex3.extra["P_loop"][1:], rtol=1e-12)


def test_enumeration_budget():
    p = rp.RPMParams(build_rectangular((4, 2)), 2, 0.5, rp.crossing_on(2), 1)
    with pytest.raises(rp.EnumerationBudgetError):
        rp.enumerate_two_point(p, rp.CROSSING, node_budget=100)


def test_truncation_bound():
    p = rp.RPMParams(build_torus(2, 2), 1, 0.5, rp.loop_on(1), 2)
    assert math.isclose(p.truncation_bound(), math.exp(0.5) - 1 - 0.5 - 0.125, rel_tol=1e-12)


def transition_matrix(chain):
    """Exact one-step kernel: every uniform is only used as int(u * k), so grid midpoints are exhaustive."""
    G = fb.WormGeometry(chain.inc_edge, chain.inc_nbr, chain.coords, chain.shape)
    P = fb.WormParams(chain.kind_code, chain.p.N, chain.p.beta, chain.lam0, chain.W0, chain.W1, chain.W2)
    V = G.V
    sizes = [P.ntypes, math.lcm(G.D, V), 2, math.lcm(*range(1, max(P.N, 2) + 1)),
             math.lcm(*range(1, V + 1))]
    mids = [[(k + 0.5) / n for k in range(n)] for n in sizes]
    total = math.prod(sizes)
    lv, le = [0] * V, [0] * V
    start = fb.WormState(chain.col, chain.deg, chain.st)
    states = {start.key(): start}
    T = defaultdict(float)
    todo = deque([start])
    while todo:
        S0 = todo.popleft()
        a = S0.key()
        for us in itertools.product(*mids):
            S = S0.copy()
            ratio, _, _ = fb.propose(S, G, P, *us, lv, le)
            if ratio > 0:
                b = S.key()
                T[a, b] += min(1.0, ratio) / total
                if b not in states:
                    states[b] = S.copy()
                    todo.append(states[b])
    return states, T


@pytest.mark.parametrize("kind,U,lam0", [(rp.CROSSING, rp.crossing_on(2), 1.3),
                                         (rp.SPIN_SOURCE, rp.loop_on(2, sources=True), 0.8)])
def test_worm_detailed_balance(kind, U, lam0):
    chain = rp.WormChain(rp.RPMParams(build_torus(2, 2), 2, 0.7, U, 1), kind, lam0)
    states, T = transition_matrix(chain)
    pi = {k: rp.extended_weight(s, chain) for k, s in states.items()}
    assert min(pi.values()) > 0
    assert len(states) > 100
    for (a, b), t_ab in T.items():
        if a != b:
            flow = pi[a] * t_ab
            assert abs(flow - pi[b] * T.get((b, a), 0.0)) <= 1e-12 * flow


def zscores(w, ex, key=None, err=None):
    a = w.values if key is None else w.extra[key]
    b = ex.values if key is None else ex.extra[key]
    s = w.stderr if err is None else w.extra[err]
    mask = s > 0
    assert np.all(a[~mask] == b[~mask]) or key is not None
    return np.abs(a - b)[mask] / s[mask]


@pytest.mark.parametrize("kind,U,lam0", [(rp.CROSSING, rp.crossing_on(2), 1.0),
                                         (rp.CROSSING, rp.crossing_on(2), 2.5),
                                         (rp.SPIN_SOURCE, rp.loop_on(2, sources=True), 1.0)])
def test_worm_matches_enumeration(kind, U, lam0):
    p = rp.RPMParams(build_rectangular((4, 2)), 2, 0.5, U, 1)
    ex = rp.enumerate_two_point(p, kind)
    w = rp.worm_estimate(p, kind, 100_000, 5_000, seed=3, lam0=lam0)
    assert zscores(w, ex).max() <= 4.0
    if kind == rp.CROSSING:
        assert zscores(w, ex, "P_loop", "P_loop_stderr").max() <= 4.0
    assert 0 < w.meta["closed_fraction"] <= 1


def test_worm_deterministic_and_backends_identical():
    p = rp.RPMParams(build_rectangular((4, 2)), 2, 0.6, rp.crossing_on(2), 1)
    a = rp.worm_estimate(p, rp.CROSSING, 400, 40, seed=9, n_batches=8, backend="python")
    b = rp.worm_estimate(p, rp.CROSSING, 400, 40, seed=9, n_batches=8, backend="compiled")
    c = rp.worm_estimate(p, rp.CROSSING, 400, 40, seed=9, n_batches=8)
    for t in (b, c):
        assert np.array_equal(a.values, t.values) and np.array_equal(a.stderr, t.stderr)
        assert np.array_equal(a.extra["P_loop"], t.extra["P_loop"])
        assert a.meta["acceptance"] == t.meta["acceptance"]


def test_worm_argument_errors():
    g = build_rectangular((4, 2))
    with pytest.raises(rp.ErgodicityError):
        rp.WormChain(rp.RPMParams(g, 1, 0.5, rp.loop_on(1, max_pairings=2), 1), rp.SPIN_SOURCE)
    with pytest.raises(rp.ErgodicityError):
        rp.WormChain(rp.RPMParams(g, 2, 0.5, rp.loop_on(2), 1), rp.SPIN_SOURCE)
    p = rp.RPMParams(g, 2, 0.5, rp.crossing_on(2), 1)
    with pytest.raises(ValueError):
        rp.worm_estimate(p, rp.CROSSING, 100, 200, seed=0)
    with pytest.raises(ValueError):
        rp.worm_estimate(p, rp.CROSSING, 40, 20, seed=0, n_batches=32)
    with pytest.raises(ValueError):
        rp.worm_estimate(rp.RPMParams(g, 1, 0.5, rp.crossing_on(1), 1), rp.CROSSING, 100, 0, seed=0)
