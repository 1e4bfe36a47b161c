import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpmono.lattice import build_rectangular, build_torus
from rpmono.tables import (
    TableError,
    TwoPointTable,
    axis_values,
    cesaro_sum,
    read_csv,
    tables_equal,
    write_csv,
)


def test_constant_cesaro():
    t = TwoPointTable.constant(build_torus(2, 4), 0.37)
    assert cesaro_sum(t) == (0.37, 0.0)


def test_cesaro_with_errors():
    g = build_torus(1, 4)
    t = TwoPointTable(g, [1.0, 2.0, 3.0, 4.0], stderr=[0.3, 0.4, 0.0, 0.0])
    mean, err = cesaro_sum(t)
    assert mean == 2.5
    assert np.isclose(err, 0.5 / 4)


@given(shape=st.sampled_from([(4,), (2, 2), (4, 2), (2, 2, 2)]), seed=st.integers(0, 10**6),
       with_err=st.booleans(), with_extra=st.booleans())
def test_csv_round_trip(shape, seed, with_err, with_extra):
    g = build_rectangular(shape)
    rng = np.random.default_rng(seed)
    V = g.n_vertices
    t = TwoPointTable(
        g, rng.standard_normal(V) * 10.0 ** rng.integers(-20, 20, V),
        stderr=rng.random(V) if with_err else None,
        provenance="monte_carlo",
        extra={"P_loop": rng.random(V)} if with_extra else {},
        meta={"seed": seed, "nested": {"a": [1, 2]}},
    )
    back = read_csv(write_csv(t))
    assert tables_equal(t, back)
    assert back.meta == t.meta


def test_csv_file_and_header(tmp_path):
    g = build_torus(2, 4)
    t = TwoPointTable.from_function(g, lambda x: x[0] + 0.5 * x[1], provenance="dense")
    path = tmp_path / "t.csv"
    text = write_csv(t, path)
    lines = text.splitlines()
    assert lines[0] == "# rpmono-table v1"
    assert lines[1] == "2,4x4,dense"
    assert lines[2] == "x1,x2,G,stderr"
    assert tables_equal(read_csv(path), t)


@pytest.mark.parametrize("mutate", [
    lambda s: s.replace("# rpmono-table v1", "# other"),
    lambda s: "\n".join(s.splitlines()[:-1]),
    lambda s: s.replace("x1,x2,G", "a,b,G"),
])
def test_csv_rejects_malformed(mutate):
    text = write_csv(TwoPointTable.constant(build_torus(2, 2), 1.0), meta=False)
    with pytest.raises((TableError, FileNotFoundError, OSError)):
        read_csv(mutate(text))


def test_validation():
    g = build_torus(1, 4)
    with pytest.raises(TableError):
        TwoPointTable(g, [1.0, 2.0])
    with pytest.raises(TableError):
        TwoPointTable(g, [1.0] * 4, stderr=[-1.0] * 4)
    with pytest.raises(TableError):
        TwoPointTable(g, [1.0] * 4, provenance="guess")


def test_translation_and_axis_values():
    g = build_torus(1, 6)
    t = TwoPointTable(g, np.arange(6.0))
    assert t.G((2,), (5,)) == 3.0
    assert t.G((5,), (2,)) == 3.0
    assert axis_values(t, 0, [1, 2, 7]).tolist() == [1.0, 2.0, 1.0]
