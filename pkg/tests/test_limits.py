import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraglab.limits import (
    LimitLaw,
    ks_against_limit,
    limit_cdf,
    limit_test,
    normalized_measure,
    quantile_consistency,
    write_cdf_csv,
    xn_limit_cdf,
    xn_limit_quantile,
)
from fraglab.partition import BoundarySpec, EmpiricalMeasure, SplitSpec


def test_regular_cdf_closed_form():
    law = LimitLaw("regular", c=2.0, q=0.4, pbar=0.3)
    t = np.array([0.0, 0.3, 0.6, 0.8, 1.0])
    w = 0.6
    left = np.where(t < w, 1 - np.clip((w - t) / w, 0, 1) ** 0.5, 1.0)
    right = np.where(t > w, (np.clip(t - w, 0, None) / 0.4) ** 0.5, 0.0)
    assert np.allclose(limit_cdf(law, t), 0.3 * left + 0.7 * right)
    assert limit_cdf(law, 0.6) == pytest.approx(0.3)
    assert limit_cdf(law, 1.0) == 1.0


def test_c1_half_is_uniform():
    law = LimitLaw("regular", c=1.0, q=0.5, pbar=0.5)
    t = np.linspace(0, 1, 11)
    assert np.allclose(limit_cdf(law, t), t)


def test_slow_and_fast_laws():
    slow = LimitLaw.for_regime(0.0, 0.5, 0.3)
    assert slow.regime == "slow" and slow.is_dirac
    assert np.allclose(limit_cdf(slow, [0.0, 0.5, 1.0]), [0.3, 0.3, 1.0])
    fast = LimitLaw.for_regime(math.inf, 0.3, 0.5)
    assert np.allclose(limit_cdf(fast, [0.69, 0.7, 1.0]), [0, 1, 1])


def test_degenerate_q_collapses():
    law = LimitLaw("regular", c=1.0, q=0.0, pbar=0.4)
    assert limit_cdf(law, 0.999) == pytest.approx(0.4 * 0.999)
    assert limit_cdf(law, 1.0) == 1.0
    law = LimitLaw("regular", c=1.0, q=1.0, pbar=0.4)
    assert limit_cdf(law, 0.0) == pytest.approx(0.4)


def test_limit_law_validation():
    with pytest.raises(ValueError):
        LimitLaw("regular", c=0.0)
    with pytest.raises(ValueError):
        LimitLaw("weird")
    with pytest.raises(ValueError):
        limit_cdf(LimitLaw("regular"), 1.5)


def test_components_agree_with_cdf():
    law = LimitLaw("regular", c=0.7, q=0.35, pbar=0.6)
    t = np.linspace(0, 1, 301)
    assert np.allclose(law.components().cdf(t), limit_cdf(law, t), atol=1e-12)


def test_quantile_inverts_cdf():
    t = np.linspace(0.01, 0.99, 99)
    y = xn_limit_quantile(2.0, 0.4, 0.3, t)
    assert np.allclose(xn_limit_cdf(2.0, 0.4, 0.3, y), t, atol=1e-12)
    assert np.allclose(xn_limit_quantile(1.0, 0.5, 0.5, t), t, atol=1e-15)


@pytest.mark.parametrize("c,q,pbar", [(0.5, 0.3, 0.7), (1.0, 0.5, 0.5), (2.0, 0.4, 0.3), (3.0, 0.9, 0.1)])
def test_quantile_matches_stated_limit(c, q, pbar):
    assert quantile_consistency(c, q, pbar).max_gap < 1e-6


def test_quantile_consistency_guards():
    with pytest.raises(ValueError):
        quantile_consistency(0.0, 0.5, 0.5)


def test_regular_case_measure_is_uniform_lattice():
    # lattice break points give alpha[n,k] = k/(n+1) exactly
    m = normalized_measure(BoundarySpec.regular_case(1.0, 0.3), SplitSpec.det(0.3), 99)
    assert np.allclose(m.atoms, np.arange(1, 100) / 100, atol=1e-12)


def test_limit_test_regular_decreasing():
    rep = limit_test(BoundarySpec.power(2.0, q=0.4), SplitSpec.det(0.3), 3000, compare_n=300)
    assert rep.passed, rep.to_dict()
    assert rep["ks_limit_decreasing"].passed


def test_limit_test_slow_and_fast():
    rep = limit_test(BoundarySpec.constant(), SplitSpec.det(0.3), 2000)
    assert rep.passed and rep["boundary_mass"].statistic > 0.95
    rep = limit_test(BoundarySpec.exponential(q=0.3), SplitSpec.det(0.5), 2000)
    assert rep.passed
    assert rep["concentration"].details["median"] == pytest.approx(0.7, abs=1e-9)


def test_ks_against_limit_detects_wrong_law():
    m = normalized_measure(BoundarySpec.power(1.0, q=0.5), SplitSpec.det(0.5), 2000)
    wrong = LimitLaw("regular", c=3.0, q=0.2, pbar=0.9)
    assert not ks_against_limit(m, wrong).passed
    with pytest.raises(ValueError):
        ks_against_limit(EmpiricalMeasure(0, np.array([])), wrong)


def test_cdf_csv(tmp_path):
    law = LimitLaw("regular")
    m = EmpiricalMeasure(2, np.array([0.25, 0.75]))
    f = tmp_path / "cdf.csv"
    write_cdf_csv(f, m, law, grid=[0.0, 0.5, 1.0])
    lines = f.read_text().splitlines()
    assert lines[0] == "t,empirical_cdf,limit_cdf"
    assert lines[2] == "0.5,0.5,0.5"


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 5), st.floats(0, 1), st.floats(0, 1))
def test_limit_cdf_is_cdf(c, q, pbar):
    law = LimitLaw("regular", c, q, pbar)
    f = limit_cdf(law, np.linspace(0, 1, 201))
    assert np.all(np.diff(f) >= -1e-12)
    assert f[-1] == pytest.approx(1.0)
    assert np.all((f >= 0) & (f <= 1 + 1e-12))
