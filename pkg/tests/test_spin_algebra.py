from fractions import Fraction
from functools import reduce

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpmono.spin_algebra import (
    SiteOperator,
    apply_site_operator,
    as_spin,
    hilbert_dimension,
    site_m_table,
    spin_matrices,
)

SPINS = [Fraction(1, 2), Fraction(1), Fraction(3, 2), Fraction(2)]


def comm(a, b):
    return a @ b - b @ a


@pytest.mark.parametrize("S", SPINS)
def test_commutation_and_casimir(S):
    m = spin_matrices(S)
    s = float(S)
    eye = np.eye(m.dim)
    assert np.max(np.abs(comm(m.S1, m.S2) - 1j * m.S3)) <= 1e-12
    assert np.max(np.abs(comm(m.S2, m.S3) - 1j * m.S1)) <= 1e-12
    assert np.max(np.abs(comm(m.S3, m.S1) - 1j * m.S2)) <= 1e-12
    cas = m.S1 @ m.S1 + m.S2 @ m.S2 + m.S3 @ m.S3
    assert np.max(np.abs(cas - s * (s + 1) * eye)) <= 1e-12
    levels = np.arange(-s, s + 0.5)
    for a in (m.S1, m.S2, m.S3):
        assert np.allclose(a, a.conj().T, atol=1e-12)
        assert np.allclose(np.linalg.eigvalsh(a), levels, atol=1e-12)
    assert abs(np.trace(m.S3)) <= 1e-12
    assert abs(np.trace(m.S3 @ m.S3) - s * (s + 1) * (2 * s + 1) / 3) <= 1e-12
    # S1 real symmetric, S2 imaginary antisymmetric
    assert np.all(m.S1.imag == 0) and np.all(m.S2.real == 0)


def test_spin_half_diag():
    assert np.array_equal(spin_matrices(0.5).S3.real, np.diag([0.5, -0.5]))


@pytest.mark.parametrize("bad", [0, -1, 0.3, 1.25, "x"])
def test_bad_spin(bad):
    with pytest.raises(ValueError):
        as_spin(bad)


def kron_site(local, site, n, q):
    # site 0 is the least significant digit, i.e. the last Kronecker factor
    mats = [np.eye(q)] * n
    mats[n - 1 - site] = local
    return reduce(np.kron, mats)


def test_apply_examples():
    up_up = np.zeros(4)
    up_up[0] = 1.0
    out = apply_site_operator(SiteOperator(0, "S3", Fraction(1, 2)), 2, up_up)
    assert np.allclose(out, 0.5 * up_up)
    v = np.random.default_rng(0).standard_normal(4)
    assert np.array_equal(apply_site_operator(SiteOperator(1, "I", Fraction(1, 2)), 2, v), v)


def test_apply_matches_kron():
    rng = np.random.default_rng(1)
    v = rng.standard_normal(4)
    s3 = spin_matrices(0.5).S3.real
    got = apply_site_operator(SiteOperator(1, "S3", 0.5), 2,
                              apply_site_operator(SiteOperator(0, "S3", 0.5), 2, v))
    want = kron_site(s3, 1, 2, 2) @ kron_site(s3, 0, 2, 2) @ v
    assert np.max(np.abs(got - want)) <= 1e-12


@given(S=st.sampled_from(SPINS[:3]), n=st.integers(2, 4), data=st.data())
def test_apply_commutes_and_matches_kron(S, n, data):
    q = int(2 * S) + 1
    if q**n > 300:
        n = 2
    x = data.draw(st.integers(0, n - 1))
    y = data.draw(st.integers(0, n - 1).filter(lambda k: k != x))
    a = data.draw(st.sampled_from(["S1", "S2", "S3"]))
    b = data.draw(st.sampled_from(["S1", "S2", "S3"]))
    seed = data.draw(st.integers(0, 2**31))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(q**n) + 1j * rng.standard_normal(q**n)
    ox, oy = SiteOperator(x, a, S), SiteOperator(y, b, S)
    xy = apply_site_operator(oy, n, apply_site_operator(ox, n, v))
    yx = apply_site_operator(ox, n, apply_site_operator(oy, n, v))
    assert np.max(np.abs(xy - yx)) <= 1e-12
    m = spin_matrices(S)
    want = kron_site(m.local(a), x, n, q) @ v
    assert np.max(np.abs(apply_site_operator(ox, n, v) - want)) <= 1e-12


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        apply_site_operator(SiteOperator(0, "S3", 0.5), 3, np.zeros(4))


def test_m_table():
    assert hilbert_dimension(3, 1) == 27
    t = site_m_table(2, 0.5)
    assert t.tolist() == [[0.5, 0.5], [-0.5, 0.5], [0.5, -0.5], [-0.5, -0.5]]
