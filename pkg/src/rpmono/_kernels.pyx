# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: Hamiltonian block apply and the worm chain.

Same signatures and semantics as ``rpmono._fallback``.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange

cnp.import_array()

ctypedef cnp.int64_t i64

cdef enum:
    HEAD = 0
    SWAP = 1
    RECOLOUR = 2
    DEFECT_PAIR = 3
    DEFECT_SHIFT = 4
    CLOSED = 0
    OPEN = 1
    DEFECT = 2
    SPIN_SOURCE = 0
    CROSSING = 1


def ham_apply(const double[:, ::1] v, double[:, ::1] out, const cnp.uint8_t[:, ::1] digits,
              const i64[::1] place, const i64[:, ::1] edges, const double[::1] mval,
              const double[::1] ap,
              double a, double b, int nthreads=1):
    cdef Py_ssize_t dim = v.shape[0]
    cdef Py_ssize_t R = v.shape[1]
    cdef Py_ssize_t E = edges.shape[0]
    cdef int q = mval.shape[0]
    cdef double ca = -2.0 * a
    cdef double cb = -2.0 * b
    cdef Py_ssize_t s, k, r, src
    cdef i64 x, y, px, py
    cdef int dx, dy
    cdef double diag, amp
    for s in prange(dim, nogil=True, schedule='static', num_threads=nthreads):
        for r in range(R):
            out[s, r] = 0.0
        for k in range(E):
            x = edges[k, 0]
            y = edges[k, 1]
            dx = digits[s, x]
            dy = digits[s, y]
            px = place[x]
            py = place[y]
            diag = -2.0 * mval[dx] * mval[dy]
            for r in range(R):
                out[s, r] += diag * v[s, r]
            if ca != 0.0:
                if dx + 1 < q and dy >= 1:
                    src = s + px - py
                    amp = ca * (ap[dx + 1] * ap[dy])
                    for r in range(R):
                        out[s, r] += amp * v[src, r]
                if dx >= 1 and dy + 1 < q:
                    src = s - px + py
                    amp = ca * (ap[dx] * ap[dy + 1])
                    for r in range(R):
                        out[s, r] += amp * v[src, r]
            if cb != 0.0:
                if dx + 1 < q and dy + 1 < q:
                    src = s + px + py
                    amp = cb * (ap[dx + 1] * ap[dy + 1])
                    for r in range(R):
                        out[s, r] += amp * v[src, r]
                if dx >= 1 and dy >= 1:
                    src = s - px - py
                    amp = cb * (ap[dx] * ap[dy])
                    for r in range(R):
                        out[s, r] += amp * v[src, r]
    return np.asarray(out)


# ---------------------------------------------------------------------------
# worm chain

cdef struct Ctx:
    i64* col
    i64* deg
    const i64* inc_edge
    const i64* inc_nbr
    const i64* coords
    const i64* shape
    i64* strides
    const double* W1
    const double* W2
    i64* lv
    i64* le
    i64* log_e
    i64* log_old
    i64* log_v
    i64* log_w
    int nlog
    int V
    int D
    int d
    int N
    int kind
    int ntypes
    int nwc
    double beta
    double lam0
    double W0
    i64 mode, t, h, wc, da, db


cdef inline double wv(Ctx* C, i64 v) nogil:
    cdef i64 dg = C.deg[v]
    cdef int s
    cdef i64 c, c1 = 0, c2 = 0
    if dg == 0:
        return C.W0
    for s in range(C.D):
        c = C.col[C.inc_edge[v * C.D + s]]
        if c:
            if c1 == 0:
                c1 = c
            else:
                c2 = c
    if dg == 1:
        return C.W1[c1]
    if dg == 2:
        return C.W2[c1 * (C.N + 1) + c2]
    return 0.0


cdef inline bint mixed(Ctx* C, i64 v) nogil:
    cdef int s
    cdef i64 c, c1 = 0
    if C.deg[v] != 2:
        return False
    for s in range(C.D):
        c = C.col[C.inc_edge[v * C.D + s]]
        if c:
            if c1 == 0:
                c1 = c
            elif c != c1:
                return True
    return False


cdef inline void set_edge(Ctx* C, i64 e, i64 c, i64 v, i64 w, bint log) nogil:
    cdef i64 old = C.col[e]
    if old == c:
        return
    if log:
        C.log_e[C.nlog] = e
        C.log_old[C.nlog] = old
        C.log_v[C.nlog] = v
        C.log_w[C.nlog] = w
        C.nlog += 1
    if old == 0:
        C.deg[v] += 1
        C.deg[w] += 1
    elif c == 0:
        C.deg[v] -= 1
        C.deg[w] -= 1
    C.col[e] = c


cdef inline void revert(Ctx* C, i64* scal) nogil:
    cdef int k
    for k in range(C.nlog - 1, -1, -1):
        set_edge(C, C.log_e[k], C.log_old[k], C.log_v[k], C.log_w[k], False)
    C.nlog = 0
    C.mode = scal[0]
    C.t = scal[1]
    C.h = scal[2]
    C.wc = scal[3]
    C.da = scal[4]
    C.db = scal[5]


cdef inline int trace(Ctx* C, i64 v) nogil:
    cdef int s, s0 = -1, nxt, n
    cdef i64 e, e2, cur, prev
    for s in range(C.D):
        if C.col[C.inc_edge[v * C.D + s]]:
            s0 = s
            break
    e = C.inc_edge[v * C.D + s0]
    cur = C.inc_nbr[v * C.D + s0]
    C.lv[0] = v
    C.le[0] = e
    prev = e
    n = 1
    while cur != v:
        if C.deg[cur] != 2:
            return -1
        C.lv[n] = cur
        nxt = -1
        for s in range(C.D):
            e2 = C.inc_edge[cur * C.D + s]
            if e2 != prev and C.col[e2]:
                nxt = s
                break
        e2 = C.inc_edge[cur * C.D + nxt]
        C.le[n] = e2
        prev = e2
        cur = C.inc_nbr[cur * C.D + nxt]
        n += 1
    return n


cdef inline double loop_weight(Ctx* C, int n) nogil:
    cdef double p = 1.0
    cdef int k
    for k in range(n):
        p *= wv(C, C.lv[k])
    return p


cdef inline i64 diff(Ctx* C, i64 a, i64 b) nogil:
    cdef i64 r = 0
    cdef int i
    cdef i64 dd
    for i in range(C.d):
        dd = (C.coords[b * C.d + i] - C.coords[a * C.d + i]) % C.shape[i]
        if dd < 0:
            dd += C.shape[i]
        r += dd * C.strides[i]
    return r


cdef double propose(Ctx* C, double u0, double u1, double u2, double u3, double u4) nogil:
    cdef int mtype = <int>(u0 * C.ntypes)
    cdef int V = C.V
    cdef int s, n, k, j, arc, lo, hi, cnt
    cdef i64 e, y, h, c, wc, cn, a, b, other, a2, eo, target
    cdef double wold, wnew, ratio, pold, pnew, f
    cdef int slots[2]
    if mtype == HEAD:
        if C.mode == DEFECT:
            return 0.0
        s = <int>(u1 * C.D)
        h = C.h
        e = C.inc_edge[h * C.D + s]
        y = C.inc_nbr[h * C.D + s]
        if C.col[e] == 0:
            if C.mode == CLOSED:
                if C.kind == SPIN_SOURCE:
                    wc = 1
                else:
                    wc = 1 + <int>(u3 * C.N)
            else:
                wc = C.wc
            wold = wv(C, h) * wv(C, y)
            set_edge(C, e, wc, h, y, True)
            if C.deg[h] > 2 or C.deg[y] > 2:
                return 0.0
            if C.kind == CROSSING and (mixed(C, h) or mixed(C, y)):
                return 0.0
            wnew = wv(C, h) * wv(C, y)
            ratio = C.beta * wnew / wold
            if C.mode == CLOSED:
                ratio = ratio / C.lam0 * C.nwc
                C.mode = OPEN
                C.wc = wc
                C.h = y
            elif y == C.t:
                ratio = ratio * C.lam0
                C.mode = CLOSED
                C.wc = 0
                C.h = C.t
            else:
                C.h = y
            return ratio
        c = C.col[e]
        if C.mode == CLOSED:
            if C.kind == SPIN_SOURCE and c != 1:
                return 0.0
            n = trace(C, h)
            if n < 0:
                return 0.0
            for k in range(n):
                if C.col[C.le[k]] != c:
                    return 0.0
        wold = wv(C, h) * wv(C, y)
        set_edge(C, e, 0, h, y, True)
        wnew = wv(C, h) * wv(C, y)
        ratio = wnew / wold / C.beta
        if C.mode == CLOSED:
            ratio = ratio / C.lam0
            C.mode = OPEN
            C.wc = c
            C.h = y
        elif y == C.t:
            ratio = ratio * C.lam0 / C.nwc
            C.mode = CLOSED
            C.wc = 0
            C.h = C.t
        else:
            C.h = y
        return ratio
    if mtype == SWAP:
        if C.mode == OPEN:
            a = C.t
            C.t = C.h
            C.h = a
            return 1.0
        if C.mode == CLOSED:
            C.t = <int>(u1 * V)
            C.h = C.t
            return 1.0
        return 0.0
    if mtype == RECOLOUR:
        a = <int>(u1 * V)
        if C.deg[a] != 2:
            return 0.0
        n = trace(C, a)
        if n < 0:
            return 0.0
        c = C.col[C.le[0]]
        for k in range(n):
            if C.col[C.le[k]] != c:
                return 0.0
        cn = 1 + <int>(u3 * C.N)
        pold = loop_weight(C, n)
        for k in range(n):
            set_edge(C, C.le[k], cn, C.lv[k], C.lv[(k + 1) % n], True)
        pnew = loop_weight(C, n)
        return pnew / pold
    if mtype == DEFECT_PAIR:
        if C.mode == CLOSED:
            a = <int>(u1 * V)
            if C.deg[a] != 2:
                return 0.0
            n = trace(C, a)
            if n < 0:
                return 0.0
            c = C.col[C.le[0]]
            for k in range(n):
                if C.col[C.le[k]] != c:
                    return 0.0
            k = 1 + <int>(u4 * (n - 1))
            b = C.lv[k]
            arc = <int>(u2 * 2)
            cn = 1 + <int>(u3 * (C.N - 1))
            if cn >= c:
                cn += 1
            pold = loop_weight(C, n)
            if arc == 0:
                lo = 0
                hi = k
            else:
                lo = k
                hi = n
            for j in range(lo, hi):
                set_edge(C, C.le[j], cn, C.lv[j], C.lv[(j + 1) % n], True)
            pnew = loop_weight(C, n)
            f = <double>(V * (n - 1) * (C.N - 1))
            ratio = pnew / pold * f / 2.0 / C.lam0
            C.mode = DEFECT
            C.da = a if a < b else b
            C.db = b if a < b else a
            return ratio
        if C.mode == DEFECT:
            n = trace(C, C.da)
            k = 1
            while C.lv[k] != C.db:
                k += 1
            arc = <int>(u2 * 2)
            if arc == 0:
                lo = 0
                hi = k
                target = C.col[C.le[k]]
            else:
                lo = k
                hi = n
                target = C.col[C.le[0]]
            pold = loop_weight(C, n)
            for j in range(lo, hi):
                set_edge(C, C.le[j], target, C.lv[j], C.lv[(j + 1) % n], True)
            pnew = loop_weight(C, n)
            f = <double>(V * (n - 1) * (C.N - 1))
            ratio = pnew / pold * 2.0 / f * C.lam0
            C.mode = CLOSED
            C.da = -1
            C.db = -1
            return ratio
        return 0.0
    # DEFECT_SHIFT
    if C.mode != DEFECT:
        return 0.0
    if <int>(u2 * 2) == 0:
        a = C.da
        other = C.db
    else:
        a = C.db
        other = C.da
    j = <int>(u3 * 2)
    cnt = 0
    for s in range(C.D):
        if C.col[C.inc_edge[a * C.D + s]]:
            slots[cnt] = s
            cnt += 1
    e = C.inc_edge[a * C.D + slots[j]]
    a2 = C.inc_nbr[a * C.D + slots[j]]
    if a2 == other:
        return 0.0
    eo = C.inc_edge[a * C.D + slots[1 - j]]
    pold = wv(C, a) * wv(C, a2)
    set_edge(C, e, C.col[eo], a, a2, True)
    pnew = wv(C, a) * wv(C, a2)
    C.da = a2 if a2 < other else other
    C.db = other if a2 < other else a2
    return pnew / pold


cdef void measure_state(Ctx* C, i64* ghist, i64* phist, i64* zc, cnp.uint8_t* visited) nogil:
    cdef int v, n, i, j
    if C.mode == CLOSED:
        zc[0] += 1
        if C.kind == CROSSING:
            for v in range(C.V):
                if C.deg[v] == 2 and not visited[v]:
                    n = trace(C, v)
                    for i in range(n):
                        visited[C.lv[i]] = 1
                    for i in range(n):
                        for j in range(n):
                            phist[diff(C, C.lv[i], C.lv[j])] += 1
            for v in range(C.V):
                visited[v] = 0
    elif C.mode == OPEN:
        if C.kind == SPIN_SOURCE:
            ghist[diff(C, C.t, C.h)] += 1
    else:
        ghist[diff(C, C.da, C.db)] += 1
        ghist[diff(C, C.db, C.da)] += 1


def worm_run(i64[::1] col, i64[::1] deg, i64[::1] st, const i64[:, ::1] inc_edge,
             const i64[:, ::1] inc_nbr, const i64[:, ::1] coords, const i64[::1] shape,
             int kind, int N, double beta, double lam0, double W0, const double[::1] W1,
             const double[:, ::1] W2, const double[::1] uniforms, i64 n_sweeps, i64 steps_per_sweep, bint measure,
             i64[::1] zc, i64[::1] ghist, i64[::1] phist, i64[::1] acc):
    cdef Ctx C
    cdef int V = inc_edge.shape[0]
    cdef int d = coords.shape[1]
    cdef i64[::1] strides = np.empty(d, dtype=np.int64)
    cdef i64[::1] lv = np.empty(V, dtype=np.int64)
    cdef i64[::1] le = np.empty(V, dtype=np.int64)
    cdef Py_ssize_t nlog_max = 2 * col.shape[0] + 4
    cdef i64[::1] log_e = np.empty(nlog_max, dtype=np.int64)
    cdef i64[::1] log_old = np.empty(nlog_max, dtype=np.int64)
    cdef i64[::1] log_v = np.empty(nlog_max, dtype=np.int64)
    cdef i64[::1] log_w = np.empty(nlog_max, dtype=np.int64)
    cdef cnp.uint8_t[::1] visited = np.zeros(V, dtype=np.uint8)
    cdef i64 scal[6]
    cdef i64 acc_ = 1
    cdef int i, mtype
    cdef i64 sw, stp, pos = 0
    cdef double ratio
    if uniforms.shape[0] < 6 * n_sweeps * steps_per_sweep:
        raise ValueError("not enough uniforms for the requested sweeps")
    for i in range(d - 1, -1, -1):
        strides[i] = acc_
        acc_ *= shape[i]
    C.col = &col[0]
    C.deg = &deg[0]
    C.inc_edge = &inc_edge[0, 0]
    C.inc_nbr = &inc_nbr[0, 0]
    C.coords = &coords[0, 0]
    C.shape = &shape[0]
    C.strides = &strides[0]
    C.W1 = &W1[0]
    C.W2 = &W2[0, 0]
    C.lv = &lv[0]
    C.le = &le[0]
    C.log_e = &log_e[0]
    C.log_old = &log_old[0]
    C.log_v = &log_v[0]
    C.log_w = &log_w[0]
    C.nlog = 0
    C.V = V
    C.D = inc_edge.shape[1]
    C.d = d
    C.N = N
    C.kind = kind
    C.ntypes = 3 if kind == SPIN_SOURCE else 5
    C.nwc = 1 if kind == SPIN_SOURCE else N
    C.beta = beta
    C.lam0 = lam0
    C.W0 = W0
    C.mode = st[0]
    C.t = st[1]
    C.h = st[2]
    C.wc = st[3]
    C.da = st[4]
    C.db = st[5]
    with nogil:
        for sw in range(n_sweeps):
            for stp in range(steps_per_sweep):
                scal[0] = C.mode
                scal[1] = C.t
                scal[2] = C.h
                scal[3] = C.wc
                scal[4] = C.da
                scal[5] = C.db
                C.nlog = 0
                mtype = <int>(uniforms[pos] * C.ntypes)
                ratio = propose(&C, uniforms[pos], uniforms[pos + 1], uniforms[pos + 2],
                                uniforms[pos + 3], uniforms[pos + 4])
                acc[2 * mtype] += 1
                if uniforms[pos + 5] < ratio:
                    acc[2 * mtype + 1] += 1
                else:
                    revert(&C, scal)
                pos += 6
            if measure:
                measure_state(&C, &ghist[0], &phist[0], &zc[0], &visited[0])
    st[0] = C.mode
    st[1] = C.t
    st[2] = C.h
    st[3] = C.wc
    st[4] = C.da
    st[5] = C.db
