import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpmono import infrared_bounds as ib


def test_dispersion():
    assert ib.epsilon_dispersion([0.0, 0.0]) == 0.0
    assert math.isclose(ib.epsilon_dispersion([np.pi, np.pi / 2]), 6.0)


def test_one_dimension_by_hand():
    # k = pi/2, pi, 3pi/2 contribute 1, 0, 1
    assert abs(ib.J_sum(1, 4) - 0.5) <= 1e-15


@given(d=st.integers(1, 4), half=st.integers(1, 5))
def test_multiset_sum_matches_bruteforce(d, half):
    L = 2 * half
    if L**d > 20000:
        L = 4
    assert abs(ib.J_sum(d, L) - ib.J_sum_bruteforce(d, L)) <= 1e-12


# frozen from the direct L^d momentum sum
@pytest.mark.parametrize("d,L,want", [
    (2, 4, 0.9523502691896258),
    (3, 8, 1.1323651636017389),
    (4, 6, 1.0874662554350711),
    (2, 16, 1.2834271918846534),
])
def test_frozen_values(d, L, want):
    assert abs(ib.J_sum(d, L) - want) <= 1e-13


def test_large_L_and_decrease_in_d():
    j3 = ib.J_sum(3, 64)
    assert abs(j3 - 1.15672) <= 5e-3
    assert ib.J_sum(4, 64) < j3


def test_limit():
    j3, tol = ib.J_limit(3, 1e-3)
    assert abs(j3 - 1.15672) <= 1e-3
    assert tol < 1e-3
    j2, _ = ib.J_limit(2, 1e-3)
    assert math.isfinite(j2) and j2 > j3
    j6, _ = ib.J_limit(6, 1e-3)
    assert abs(j6 - 1.0) < abs(j3 - 1.0)


def test_limit_errors():
    with pytest.raises(ValueError):
        ib.J_limit(1)
    with pytest.raises(ValueError):
        ib.J_limit(3, tol=1e-6)
    with pytest.raises(ib.ExtrapolationError):
        ib.J_limit(3, 1e-4, L0=8, L_max=16)


def test_c1_bound():
    assert abs(ib.c1_bound(Fraction(1, 2), 0.0, 3, 1.15672) - (0.25 - 0.25 * 1.15672)) <= 1e-15
    assert abs(ib.c1_bound(8, 0.0, 3, 1.15672) - (24 - 0.5 * math.sqrt(24) * 1.15672)) <= 1e-12
    with pytest.raises(ValueError):
        ib.c1_bound(1, 0.5, 3, 1.0)


@pytest.mark.parametrize("u,conv,want", [
    (0.0, ib.VERTEX_SQ, Fraction(8)),
    (-1.0, ib.VERTEX_SQ, Fraction(11)),
    (0.0, ib.EDGE_SQ, Fraction(64)),
])
def test_min_spin(u, conv, want):
    J, _ = ib.J_limit(3)
    r = ib.min_spin_threshold(u, 3, J, conv)
    assert r.min_spin == want
    assert r.margin > 0
    assert r.margin_at(want - Fraction(1, 2)) <= 0
    assert bool(r.note) == (conv == ib.EDGE_SQ)


@given(u=st.floats(-1, 0), J=st.floats(0.5, 2.0), d=st.integers(1, 4), eps=st.floats(0, 0.2))
def test_threshold_is_minimal(u, J, d, eps):
    r = ib.min_spin_threshold(u, d, J, ib.VERTEX_SQ, eps)
    assert r.margin_at(r.min_spin) > 0
    if r.min_spin > Fraction(1, 2):
        assert r.margin_at(r.min_spin - Fraction(1, 2)) <= 0


def test_report_row():
    rep = ib.ir_report(1, L=4)
    row = rep.row()
    assert row["J"] == 0.5 and row["L"] == 4
    assert set(row) == set(ib.IR_COLUMNS)
    assert ib.ir_report(3).row()["L"] == "inf"
