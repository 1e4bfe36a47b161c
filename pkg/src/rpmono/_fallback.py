"""Pure numpy / Python versions of the hot kernels.

These are the reference implementations.  The compiled module ``_kernels``
exposes the same functions with the same signatures; the worm kernel there
performs the same floating-point operations in the same order, so both
backends produce bit-identical chains for a given uniform stream.
"""
from __future__ import annotations

import numpy as np

# worm move types and modes (shared with the compiled kernel)
HEAD, SWAP, RECOLOUR, DEFECT_PAIR, DEFECT_SHIFT = range(5)
CLOSED, OPEN, DEFECT = range(3)
SPIN_SOURCE, CROSSING = 0, 1
N_UNIFORMS = 6


def ham_apply(v, out, digits, place, edges, mval, ap, a, b, nthreads=1):
    """out = H v for a block of vectors v (dim, R), gather form.

    H = -2 sum_edges [S3 S3 + a (S+S- + S-S+) + b (S+S+ + S-S-)], basis digit
    d = S - m, site x has place value place[x].  ``ap[d]`` is <m+1|S+|m>.
    """
    q = mval.shape[0]
    out[...] = 0.0
    idx = np.arange(v.shape[0], dtype=np.int64)
    for x, y in edges:
        dx = digits[:, x].astype(np.int64)
        dy = digits[:, y].astype(np.int64)
        px, py = place[x], place[y]
        out += (-2.0 * mval[dx] * mval[dy])[:, None] * v
        terms = (
            (dx + 1 < q, dy >= 1, px - py, -2.0 * a, 1, 0),
            (dx >= 1, dy + 1 < q, py - px, -2.0 * a, 0, 1),
            (dx + 1 < q, dy + 1 < q, px + py, -2.0 * b, 1, 1),
            (dx >= 1, dy >= 1, -px - py, -2.0 * b, 0, 0),
        )
        for okx, oky, shift, coef, sx, sy in terms:
            if coef == 0.0:
                continue
            m = okx & oky
            if not m.any():
                continue
            s = idx[m]
            amp = ap[dx[m] + sx] * ap[dy[m] + sy]
            out[s] += (coef * amp)[:, None] * v[s + shift]
    return out


# ----------------------------------------------------------------------------
# worm chain


class WormGeometry:
    """Plain-list view of the torus used by the Python worm kernel."""

    def __init__(self, inc_edge, inc_nbr, coords, shape):
        self.inc_edge = [list(map(int, r)) for r in inc_edge]
        self.inc_nbr = [list(map(int, r)) for r in inc_nbr]
        self.coords = [list(map(int, r)) for r in coords]
        self.shape = [int(n) for n in shape]
        self.V = len(self.inc_edge)
        self.D = len(self.inc_edge[0])
        strides = []
        acc = 1
        for n in reversed(self.shape):
            strides.append(acc)
            acc *= n
        self.strides = strides[::-1]

    def diff(self, a, b):
        """Flat index of b - a."""
        ca, cb = self.coords[a], self.coords[b]
        r = 0
        for i in range(len(self.shape)):
            r += ((cb[i] - ca[i]) % self.shape[i]) * self.strides[i]
        return r


class WormParams:
    def __init__(self, kind, N, beta, lam0, W0, W1, W2):
        self.kind = int(kind)
        self.N = int(N)
        self.beta = float(beta)
        self.lam0 = float(lam0)
        self.W0 = float(W0)
        self.W1 = [float(w) for w in W1]
        self.W2 = [[float(w) for w in row] for row in W2]
        self.ntypes = 3 if self.kind == SPIN_SOURCE else 5
        self.nwc = 1 if self.kind == SPIN_SOURCE else self.N


class WormState:
    """Mutable chain state: edge colours (0 = empty) and worm bookkeeping."""

    def __init__(self, col, deg, st):
        self.col = [int(c) for c in col]
        self.deg = [int(c) for c in deg]
        self.mode, self.t, self.h, self.wc, self.da, self.db = (int(s) for s in st[:6])

    def scalars(self):
        return [self.mode, self.t, self.h, self.wc, self.da, self.db]

    def key(self):
        return (tuple(self.col), *self.scalars())

    def copy(self):
        return WormState(self.col, self.deg, self.scalars())


def _wv(S, G, P, v):
    d = S.deg[v]
    if d == 0:
        return P.W0
    c1 = 0
    c2 = 0
    for s in range(G.D):
        c = S.col[G.inc_edge[v][s]]
        if c:
            if c1 == 0:
                c1 = c
            else:
                c2 = c
    if d == 1:
        return P.W1[c1]
    if d == 2:
        return P.W2[c1][c2]
    return 0.0


def _mixed(S, G, v):
    """Degree-2 vertex whose two links carry different colours."""
    if S.deg[v] != 2:
        return False
    cs = [S.col[e] for e in G.inc_edge[v] if S.col[e]]
    return cs[0] != cs[1]


def _set_edge(S, G, e, c, v, w, log):
    old = S.col[e]
    if old == c:
        return
    if log is not None:
        log.append((e, old, v, w))
    if old == 0:
        S.deg[v] += 1
        S.deg[w] += 1
    elif c == 0:
        S.deg[v] -= 1
        S.deg[w] -= 1
    S.col[e] = c


def _revert(S, G, log, scal):
    for e, old, v, w in reversed(log):
        _set_edge(S, G, e, old, v, w, None)
    S.mode, S.t, S.h, S.wc, S.da, S.db = scal


def _endpoints(G, v, s):
    return G.inc_edge[v][s], G.inc_nbr[v][s]


def _trace(S, G, v, lv, le):
    """Follow the component of the degree-2 vertex v; length if it is a loop, else -1."""
    s0 = -1
    for s in range(G.D):
        if S.col[G.inc_edge[v][s]]:
            s0 = s
            break
    e = G.inc_edge[v][s0]
    cur = G.inc_nbr[v][s0]
    lv[0] = v
    le[0] = e
    prev = e
    n = 1
    while cur != v:
        if S.deg[cur] != 2:
            return -1
        lv[n] = cur
        nxt = -1
        for s in range(G.D):
            e2 = G.inc_edge[cur][s]
            if e2 != prev and S.col[e2]:
                nxt = s
                break
        e2 = G.inc_edge[cur][nxt]
        le[n] = e2
        prev = e2
        cur = G.inc_nbr[cur][nxt]
        n += 1
    return n


def _edge_other(G, v, e):
    for s in range(G.D):
        if G.inc_edge[v][s] == e:
            return G.inc_nbr[v][s]
    return -1


def _loop_weight(S, G, P, lv, n):
    p = 1.0
    for k in range(n):
        p *= _wv(S, G, P, lv[k])
    return p


def propose(S, G, P, u0, u1, u2, u3, u4, lv, le):
    """Apply one proposal to S; returns (ratio, log, scalars) for accept/revert.

    ``ratio`` is the Metropolis-Hastings ratio (target ratio times reverse
    over forward proposal probability); ratio 0 means an impossible move.
    """
    scal = S.scalars()
    log = []
    mtype = int(u0 * P.ntypes)
    V = G.V
    if mtype == HEAD:
        if S.mode == DEFECT:
            return 0.0, log, scal
        s = int(u1 * G.D)
        e, y = _endpoints(G, S.h, s)
        h = S.h
        if S.col[e] == 0:
            if S.mode == CLOSED:
                wc = 1 if P.kind == SPIN_SOURCE else 1 + int(u3 * P.N)
            else:
                wc = S.wc
            wold = _wv(S, G, P, h) * _wv(S, G, P, y)
            _set_edge(S, G, e, wc, h, y, log)
            if S.deg[h] > 2 or S.deg[y] > 2:
                return 0.0, log, scal
            # the open worm never creates cross-colour pairings; those belong to defect moves
            if P.kind == CROSSING and (_mixed(S, G, h) or _mixed(S, G, y)):
                return 0.0, log, scal
            wnew = _wv(S, G, P, h) * _wv(S, G, P, y)
            ratio = P.beta * wnew / wold
            if S.mode == CLOSED:
                ratio = ratio / P.lam0 * P.nwc
                S.mode = OPEN
                S.wc = wc
                S.h = y
            elif y == S.t:
                ratio = ratio * P.lam0
                S.mode = CLOSED
                S.wc = 0
                S.h = S.t
            else:
                S.h = y
            return ratio, log, scal
        c = S.col[e]
        if S.mode == CLOSED:
            if P.kind == SPIN_SOURCE and c != 1:
                return 0.0, log, scal
            # only open a monochromatic loop
            n = _trace(S, G, h, lv, le)
            if n < 0:
                return 0.0, log, scal
            for k in range(n):
                if S.col[le[k]] != c:
                    return 0.0, log, scal
        wold = _wv(S, G, P, h) * _wv(S, G, P, y)
        _set_edge(S, G, e, 0, h, y, log)
        wnew = _wv(S, G, P, h) * _wv(S, G, P, y)
        ratio = wnew / wold / P.beta
        if S.mode == CLOSED:
            ratio = ratio / P.lam0
            S.mode = OPEN
            S.wc = c
            S.h = y
        elif y == S.t:
            ratio = ratio * P.lam0 / P.nwc
            S.mode = CLOSED
            S.wc = 0
            S.h = S.t
        else:
            S.h = y
        return ratio, log, scal
    if mtype == SWAP:
        if S.mode == OPEN:
            S.t, S.h = S.h, S.t
            return 1.0, log, scal
        if S.mode == CLOSED:
            S.t = int(u1 * V)
            S.h = S.t
            return 1.0, log, scal
        return 0.0, log, scal
    if mtype == RECOLOUR:
        v = int(u1 * V)
        if S.deg[v] != 2:
            return 0.0, log, scal
        n = _trace(S, G, v, lv, le)
        if n < 0:
            return 0.0, log, scal
        c = S.col[le[0]]
        for k in range(n):
            if S.col[le[k]] != c:
                return 0.0, log, scal
        cn = 1 + int(u3 * P.N)
        pold = _loop_weight(S, G, P, lv, n)
        for k in range(n):
            e = le[k]
            _set_edge(S, G, e, cn, lv[k], lv[(k + 1) % n], log)
        pnew = _loop_weight(S, G, P, lv, n)
        return pnew / pold, log, scal
    if mtype == DEFECT_PAIR:
        if S.mode == CLOSED:
            a = int(u1 * V)
            if S.deg[a] != 2:
                return 0.0, log, scal
            n = _trace(S, G, a, lv, le)
            if n < 0:
                return 0.0, log, scal
            c = S.col[le[0]]
            for k in range(n):
                if S.col[le[k]] != c:
                    return 0.0, log, scal
            k = 1 + int(u4 * (n - 1))
            b = lv[k]
            arc = int(u2 * 2)
            cn = 1 + int(u3 * (P.N - 1))
            if cn >= c:
                cn += 1
            pold = _loop_weight(S, G, P, lv, n)
            lo, hi = (0, k) if arc == 0 else (k, n)
            for j in range(lo, hi):
                _set_edge(S, G, le[j], cn, lv[j], lv[(j + 1) % n], log)
            pnew = _loop_weight(S, G, P, lv, n)
            f = float(V * (n - 1) * (P.N - 1))
            ratio = pnew / pold * f / 2.0 / P.lam0
            S.mode = DEFECT
            S.da = min(a, b)
            S.db = max(a, b)
            return ratio, log, scal
        if S.mode == DEFECT:
            n = _trace(S, G, S.da, lv, le)
            k = 1
            while lv[k] != S.db:
                k += 1
            arc = int(u2 * 2)
            if arc == 0:
                lo, hi, target = 0, k, S.col[le[k]]
            else:
                lo, hi, target = k, n, S.col[le[0]]
            pold = _loop_weight(S, G, P, lv, n)
            for j in range(lo, hi):
                _set_edge(S, G, le[j], target, lv[j], lv[(j + 1) % n], log)
            pnew = _loop_weight(S, G, P, lv, n)
            f = float(V * (n - 1) * (P.N - 1))
            ratio = pnew / pold * 2.0 / f * P.lam0
            S.mode = CLOSED
            S.da = -1
            S.db = -1
            return ratio, log, scal
        return 0.0, log, scal
    # DEFECT_SHIFT
    if S.mode != DEFECT:
        return 0.0, log, scal
    if int(u2 * 2) == 0:
        a, other = S.da, S.db
    else:
        a, other = S.db, S.da
    j = int(u3 * 2)
    slots = [s for s in range(G.D) if S.col[G.inc_edge[a][s]]]
    e, a2 = _endpoints(G, a, slots[j])
    if a2 == other:
        return 0.0, log, scal
    eo = G.inc_edge[a][slots[1 - j]]
    pold = _wv(S, G, P, a) * _wv(S, G, P, a2)
    _set_edge(S, G, e, S.col[eo], a, a2, log)
    pnew = _wv(S, G, P, a) * _wv(S, G, P, a2)
    S.da = min(a2, other)
    S.db = max(a2, other)
    return pnew / pold, log, scal


def _measure(S, G, P, ghist, phist, zc, lv, le, visited):
    if S.mode == CLOSED:
        zc[0] += 1
        if P.kind == CROSSING:
            for v in range(G.V):
                if S.deg[v] == 2 and not visited[v]:
                    n = _trace(S, G, v, lv, le)
                    for i in range(n):
                        visited[lv[i]] = 1
                    for i in range(n):
                        for j in range(n):
                            phist[G.diff(lv[i], lv[j])] += 1
            for v in range(G.V):
                visited[v] = 0
    elif S.mode == OPEN:
        if P.kind == SPIN_SOURCE:
            ghist[G.diff(S.t, S.h)] += 1
    else:
        ghist[G.diff(S.da, S.db)] += 1
        ghist[G.diff(S.db, S.da)] += 1


def worm_run(col, deg, st, inc_edge, inc_nbr, coords, shape, kind, N, beta, lam0,
             W0, W1, W2, uniforms, n_sweeps, steps_per_sweep, measure,
             zc, ghist, phist, acc):
    """Advance the chain by n_sweeps sweeps, consuming 6 uniforms per step.

    State arrays (col, deg, st) are updated in place; measurements are added
    to zc, ghist, phist once per sweep when ``measure`` is set; acc[2*type]
    counts proposals and acc[2*type+1] acceptances.
    """
    G = WormGeometry(inc_edge, inc_nbr, coords, shape)
    P = WormParams(kind, N, beta, lam0, W0, W1, W2)
    S = WormState(col, deg, st)
    u = uniforms.tolist()
    lv = [0] * G.V
    le = [0] * G.V
    visited = [0] * G.V
    gh = [0] * G.V
    ph = [0] * G.V
    z = [0]
    ac = [0] * (2 * 5)
    pos = 0
    for _ in range(int(n_sweeps)):
        for _ in range(int(steps_per_sweep)):
            u0, u1, u2, u3, u4, u5 = u[pos:pos + 6]
            pos += 6
            mtype = int(u0 * P.ntypes)
            ratio, log, scal = propose(S, G, P, u0, u1, u2, u3, u4, lv, le)
            ac[2 * mtype] += 1
            if u5 < ratio:
                ac[2 * mtype + 1] += 1
            else:
                _revert(S, G, log, scal)
        if measure:
            _measure(S, G, P, gh, ph, z, lv, le, visited)
    col[:] = S.col
    deg[:] = S.deg
    st[:6] = S.scalars()
    zc[0] += z[0]
    ghist += np.asarray(gh, dtype=ghist.dtype)
    phist += np.asarray(ph, dtype=phist.dtype)
    acc += np.asarray(ac, dtype=acc.dtype)
