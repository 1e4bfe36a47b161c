import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpmono import acceptance
from rpmono import monotonicity_checker as mc
from rpmono import quantum_gibbs as qg
from rpmono.lattice import Reflection, VertexSet, build_rectangular, build_torus, reflect_vertex
from rpmono.tables import TwoPointTable

CFG = mc.CheckConfig()


def site_checks(t, cfg=CFG):
    return mc.check_symmetry(t, cfg) + mc.check_axis_dominance(t, cfg) + mc.check_odd_monotonicity(t, cfg)


def dense_table(shape, u=-1.0, beta=1.0):
    return qg.dense_correlations(qg.GibbsParams(build_rectangular(shape), Fraction(1, 2), u, beta))


@pytest.mark.parametrize("name,t,expected", acceptance.planted_tables(), ids=lambda v: v if isinstance(v, str) else "")
def test_planted_violations(name, t, expected):
    rep = site_checks(t)
    assert {(r.inequality, r.location) for r in rep.failures()} == expected
    assert rep.exit_code == 1
    assert rep.verdict() == "fail"


@pytest.mark.parametrize("L", [4, 6, 8])
def test_constant_table_margins_vanish(L):
    t = TwoPointTable.constant(build_torus(2, L), 0.3)
    rep = site_checks(t) + mc.check_amplification(t, CFG, 0.3) + mc.positivity_report(t, CFG, 0.3, 0.3)
    assert rep.records
    assert all(r.margin == 0.0 for r in rep.records)
    assert rep.exit_code == 0


def brute_partition_margin(g, Q, r, c):
    """rhs - lhs of the half-scale partition inequality on a constant table, by counting pairs."""
    plus = {x for x in g if (2 * x[r.axis] - r.twice_m) % (2 * g.shape[r.axis]) < g.shape[r.axis]}
    q = set(Q)
    qp = {x for x in q if x in plus}
    qm = q - qp
    Qp = qp | {reflect_vertex(g, r, x) for x in qp}
    Qm = qm | {reflect_vertex(g, r, x) for x in qm}

    def pairs(s):
        return len(s) * (len(s) - 1)

    return c * (0.25 * pairs(Qp) + 0.25 * pairs(Qm) - 0.5 * pairs(q)), len(qp), len(qm)


@given(data=st.data(), c=st.floats(0.01, 2.0))
def test_partition_constant_table(data, c):
    g = build_torus(2, 4)
    verts = list(g)
    Q = data.draw(st.lists(st.sampled_from(verts), min_size=2, max_size=8, unique=True))
    r = Reflection(data.draw(st.integers(0, 1)), data.draw(st.integers(0, 3)) + 0.5)
    t = TwoPointTable.constant(g, c)
    rec, = mc.check_partition_lemma(t, CFG, VertexSet.from_vertices(g, Q), r).records
    want, a, b = brute_partition_margin(g, Q, r, c)
    assert rec.margin == pytest.approx(want, rel=1e-12, abs=1e-12)
    # the pair count collapses to c (a - b)^2 / 2
    assert want == pytest.approx(0.5 * c * (a - b) ** 2, rel=1e-12, abs=1e-12)
    assert rec.passed


def test_partition_reduces_to_axis_dominance():
    t = dense_table((4, 2), u=-1.0, beta=1.0)
    g = t.geometry
    dom = {r.location: r for r in mc.check_axis_dominance(t, CFG).records}
    for z in g:
        for i in range(g.d):
            if z[i] % 2 == 1:
                rec, = mc.check_partition_lemma(t, CFG, VertexSet.from_vertices(g, [(0,) * g.d, z]),
                                                Reflection(i, z[i] / 2)).records
                ref = dom[(z, i)]
                assert rec.lhs == pytest.approx(ref.lhs, abs=1e-15)
                assert rec.rhs == pytest.approx(ref.rhs, abs=1e-15)


@pytest.mark.parametrize("shape", [(4, 2), (2, 2)])
@pytest.mark.parametrize("u,beta", [(-1.0, 1.0), (0.0, 3.0), (-0.5, 0.2)])
def test_dense_tables_pass(shape, u, beta):
    t = dense_table(shape, u, beta)
    rep = mc.run_all_checks(t, CFG, M=0.25, eps=0.25, n_partition=30, seed=1)
    assert rep.all_passed
    assert rep.exit_code == 0
    info = rep.summary()["positivity"]
    assert info["finite_size_surrogate"]


def test_positivity_report_vacuous_flags():
    t = dense_table((4, 2))
    rep = mc.positivity_report(t, CFG, 0.25, 0.25)
    b = rep.info["positivity"]
    assert b["vacuous_odd"] == (b["bound_odd"] <= 0)
    assert all(r.kind == mc.CONSISTENCY for r in rep.records)
    with pytest.raises(ValueError):
        mc.positivity_report(t, CFG, 0.25, 0.6)


def test_amplification_precondition():
    t = dense_table((2, 2))
    rep = mc.check_amplification(t, CFG, 0.1)
    assert [r.inequality for r in rep.failures()] == ["amplification.precondition"]
    assert rep.exit_code == 1


def noisy_table(n_bad, seed=0):
    g = build_torus(2, 8)
    base = TwoPointTable.from_function(g, lambda x: 1.0 / (1.0 + sum(min(c, 8 - c) for c in x)))
    t = TwoPointTable(g, base.values, stderr=np.full(g.n_vertices, 1e-3), provenance="monte_carlo")
    # break symmetry at n_bad distinct pairs by 10 sigma
    pairs = [((1, 0), (7, 0)), ((0, 1), (0, 7)), ((2, 1), (6, 7)), ((1, 2), (7, 6)),
             ((3, 1), (5, 7)), ((1, 3), (7, 5))]
    for x, _ in pairs[:n_bad]:
        t.values[g.index(x)] += 0.05
    return t


@pytest.mark.parametrize("n_bad,code,verdict", [(1, 0, "consistent with noise"), (4, 0, "consistent with noise"),
                                                (6, 1, "fail")])
def test_noise_policy(n_bad, code, verdict):
    rep = mc.check_symmetry(noisy_table(n_bad))
    assert len(rep.failures()) == n_bad
    assert rep.exit_code == code
    assert rep.verdict() == verdict
    assert rep.expected_by_chance > 0


def test_exact_table_has_no_noise_allowance():
    g = build_torus(2, 4)
    t = TwoPointTable.constant(g, 0.2).with_value((1, 0), 0.2 + 1e-6)
    rep = mc.check_symmetry(t)
    assert len(rep.failures()) == 1 and rep.exit_code == 1


def test_slack_uses_net_coefficients():
    g = build_torus(1, 4)
    t = TwoPointTable(g, [1.0, 0.5, 0.4, 0.5], stderr=[0.0, 0.1, 0.2, 0.1])
    rec = mc.check_symmetry(t).records[0]
    assert rec.slack == pytest.approx(CFG.abs_tol + 3.0 * np.sqrt(0.1**2 + 0.1**2))


def test_report_json_and_order():
    rep = site_checks(dense_table((4, 2)))
    doc = json.loads(rep.to_json())
    assert {"inequality", "location", "lhs", "rhs", "slack", "margin", "pass", "kind"} <= set(doc["records"][0])
    keys = [(r.inequality, mc._sort_key(r.location)) for r in rep.records]
    assert keys == sorted(keys)


def test_vertex_rp_adds_records():
    t = dense_table((4, 2))
    base = site_checks(t)
    more = site_checks(t, mc.CheckConfig(vertex_rp=True))
    names = {r.inequality for r in more.records} - {r.inequality for r in base.records}
    assert names == {"axis_dominance.vertex", "monotonicity.vertex"}
    # vertex reflections are not a symmetry of the quantum Gibbs state; only those records may fail
    assert {r.inequality for r in more.failures()} <= names


def test_config_validation():
    with pytest.raises(ValueError):
        mc.CheckConfig(sigma_k=0)
    with pytest.raises(ValueError):
        mc.CheckConfig(abs_tol=-1)
