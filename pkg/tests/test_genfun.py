import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraglab.genfun import (
    h_cross_check,
    h_edge_closed_form,
    h_limit_check,
    h_rows,
    h_table,
    write_h_csv,
)


def test_first_rows_by_hand():
    rows = list(h_rows(0.3, 2))
    assert np.allclose(rows[0], [1.0])
    assert np.allclose(rows[1], [1.2, 0.8])
    # H_2 = (1/2 + 0.7*1.2, 0.3*1.2 + 0.7*0.8, 1/2 + 0.3*0.8)
    assert np.allclose(rows[2], [1.34, 0.92, 0.74])


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_left_edge_closed_form(p):
    for n, row in enumerate(h_rows(p, 200)):
        assert row[0] == pytest.approx(h_edge_closed_form(p, n), rel=1e-13)


def test_symmetry_p_vs_one_minus_p():
    a = h_table(0.3, 500).values
    b = h_table(0.7, 500).values
    assert np.allclose(a, b[::-1], rtol=1e-12)


@pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.9])
def test_mass_is_conserved(p):
    for n, row in enumerate(h_rows(p, 1000)):
        if n % 97 == 0:
            assert abs(sum(row) - (n + 1)) < 1e-10 * (n + 1)


@pytest.mark.parametrize("p", [0.25, 0.5, 0.75])
def test_edge_limits(p):
    rep = h_limit_check(p, k_max=10, n=2000, tol=1e-6)
    assert rep.passed, rep.to_dict()
    t = h_table(p, 2000)
    assert t.values[0] == pytest.approx(1 / (2 * p), abs=1e-9)
    assert t.values[-1] == pytest.approx(1 / (2 * (1 - p)), abs=1e-9)


@pytest.mark.parametrize("p", [0.3, 0.5])
def test_cross_check_against_alpha(p):
    assert h_cross_check(p, 300) < 1e-10


def test_guards(tmp_path):
    with pytest.raises(ValueError):
        h_table(0.0, 5)
    with pytest.raises(ValueError):
        list(h_rows(0.5, -1))
    with pytest.raises(ValueError):
        h_limit_check(0.5, 10, 50, 1e-6)
    with pytest.raises(ValueError):
        h_cross_check(0.5, 5000)
    f = tmp_path / "h.csv"
    write_h_csv(f, h_table(0.3, 1))
    assert f.read_text().splitlines() == ["n,k,H", "1,0,1.2", "1,1,0.8"]


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.99), st.integers(1, 300))
def test_rows_positive_with_exact_mass(p, n):
    t = h_table(p, n)
    assert np.all(t.values > 0)
    assert t.mass == pytest.approx(n + 1, rel=1e-12)
