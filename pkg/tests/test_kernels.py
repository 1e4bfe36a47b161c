import os
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest

from rpmono import kernels
from rpmono import quantum_gibbs as qg
from rpmono import random_path as rp
from rpmono.lattice import build_rectangular, build_torus
from rpmono.spin_algebra import m_values, raising_amplitudes

compiled = pytest.mark.skipif(kernels.BACKEND != "compiled", reason="compiled kernels not built")


def ham_block(backend, p, v):
    digits, place = qg._basis(p.n_sites, p.q)
    out = np.empty_like(v)
    kernels.get_backend(backend).ham_apply(v, out, digits, place, p.edges, m_values(p.S),
                                           raising_amplitudes(p.S), (1 + p.u) / 4, (1 - p.u) / 4)
    return out


@compiled
@pytest.mark.parametrize("g,S,u", [
    (build_rectangular((4, 2)), Fraction(1, 2), -1.0),
    (build_torus(2, 2), Fraction(1, 2), 0.3),
    (build_torus(1, 6), Fraction(1), 0.0),
    (build_torus(1, 4), Fraction(3, 2), -0.5),
])
def test_ham_apply_backends_agree(g, S, u):
    p = qg.GibbsParams(g, S, u, 1.0)
    v = np.ascontiguousarray(np.random.default_rng(0).standard_normal((p.dim, 3)))
    a = ham_block("python", p, v)
    b = ham_block("compiled", p, v)
    assert np.max(np.abs(a - b)) <= 1e-12 * max(1.0, np.max(np.abs(a)))


@compiled
@pytest.mark.parametrize("kind,U", [(rp.CROSSING, rp.crossing_on(3)),
                                    (rp.SPIN_SOURCE, rp.loop_on(3, sources=True))])
def test_worm_kernel_bit_identical(kind, U):
    p = rp.RPMParams(build_torus(2, 4), 3, 0.8, U, 1)
    chains = [rp.WormChain(p, kind, 1.7) for _ in range(2)]
    u = np.random.default_rng(5).random(6 * 16 * 300)
    outs = [c.run(u, 300, 16, True, backend=b) for c, b in zip(chains, ("python", "compiled"))]
    a, b = chains
    assert outs[0][0] == outs[1][0]
    assert np.array_equal(outs[0][1], outs[1][1]) and np.array_equal(outs[0][2], outs[1][2])
    assert np.array_equal(a.col, b.col) and np.array_equal(a.deg, b.deg)
    assert np.array_equal(a.st, b.st) and np.array_equal(a.acc, b.acc)
    assert a.acc[1::2].sum() > 0


def test_fallback_selected_by_env():
    env = dict(os.environ, RPMONO_NO_EXT="1")
    out = subprocess.run([sys.executable, "-c", "import rpmono.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("gpu")
