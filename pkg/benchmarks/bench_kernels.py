"""Compiled vs pure-Python kernels: H v on spin-1/2 tori and worm sweeps.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time
from fractions import Fraction

import numpy as np

from rpmono import kernels
from rpmono import quantum_gibbs as qg
from rpmono import random_path as rp
from rpmono.lattice import build_rectangular, build_torus
from rpmono.spin_algebra import m_values, raising_amplitudes


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_ham(backend, shape, R, repeat):
    p = qg.GibbsParams(build_rectangular(shape), Fraction(1, 2), -1.0, 1.0)
    digits, place = qg._basis(p.n_sites, p.q)
    v = np.ascontiguousarray(np.random.default_rng(0).standard_normal((p.dim, R)))
    out = np.empty_like(v)
    k = kernels.get_backend(backend)

    def call():
        k.ham_apply(v, out, digits, place, p.edges, m_values(p.S), raising_amplitudes(p.S), 0.0, 0.5)

    return best_of(call, repeat), out.copy()


def bench_worm(backend, L, sweeps, repeat):
    p = rp.RPMParams(build_torus(2, L), 2, 0.5, rp.crossing_on(2), 1)
    V = p.geometry.n_vertices
    u = np.random.default_rng(1).random(6 * V * sweeps)
    result = {}

    def call():
        chain = rp.WormChain(p, rp.CROSSING)
        result["z"] = chain.run(u, sweeps, V, True, backend)[0]

    return best_of(call, repeat), result["z"]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.BACKEND != "compiled":
        raise SystemExit("compiled kernels not built; run pip install -e . --no-build-isolation")
    rows = []
    for shape, R in (((4, 2), 8), ((4, 4), 4), ((4, 2, 2), 2)):
        tp, a = bench_ham("python", shape, R, args.repeat)
        tc, b = bench_ham("compiled", shape, R, args.repeat)
        assert np.allclose(a, b, atol=1e-12)
        rows.append((f"ham_apply {'x'.join(map(str, shape))} R={R}", tp, tc))
    for L, sweeps in ((4, 2000), (8, 500)):
        tp, za = bench_worm("python", L, sweeps, args.repeat)
        tc, zb = bench_worm("compiled", L, sweeps, args.repeat)
        assert za == zb
        rows.append((f"worm_run {L}x{L} {sweeps} sweeps", tp, tc))
    print(f"{'kernel':34s} {'python [s]':>11s} {'compiled [s]':>13s} {'speedup':>8s}")
    for name, tp, tc in rows:
        print(f"{name:34s} {tp:11.4f} {tc:13.4f} {tp / tc:8.1f}")


if __name__ == "__main__":
    main()
