import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraglab.markov import (
    ChainParams,
    alpha_exact,
    alpha_rows,
    representation_check,
    representation_gap,
    simulate_chain,
    simulate_tau,
    tau_cdf_exact,
    tau_statistics,
)
from fraglab.partition import BoundarySpec, SplitSpec
from fraglab.stats import RngStream

FAMILIES = {
    "constant": BoundarySpec.constant(0.0, 1.0, q=0.5),
    "log": BoundarySpec.logarithmic(q=0.3),
    "power": BoundarySpec.power(1.0, q=0.6),
    "power_half": BoundarySpec.power(0.5, q=0.5),
    "exp": BoundarySpec.exponential(q=0.3),
    "poisson": BoundarySpec.poisson(),
}


def poisson_binomial_cdf(ps):
    """P(sum of independent B(p_j) <= k) by convolution."""
    dist = np.array([1.0])
    for p in ps:
        dist = np.convolve(dist, [1 - p, p])
    return np.cumsum(dist)


def test_constant_boundary_is_poisson_binomial():
    # no restarts on a fixed interval: x_n is a sum of B(p_j)
    ps = tuple(np.linspace(0.1, 0.9, 40))
    params = ChainParams(BoundarySpec.constant(), SplitSpec.det(ps), 40)
    alpha = alpha_exact(params)
    assert np.allclose(alpha[1:-1], poisson_binomial_cdf(ps)[:-1], atol=1e-13)


@pytest.mark.parametrize("name", list(FAMILIES))
@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
def test_representation_matches_evolution(name, p):
    params = ChainParams(FAMILIES[name], SplitSpec.det(p), 200, seed=1)
    assert representation_gap(params) < 1e-10


def test_representation_fully_random():
    params = ChainParams(BoundarySpec.power(2.0, q=0.2), SplitSpec.fully_random(), 150, seed=9)
    assert representation_gap(params) < 1e-10
    assert representation_gap(params, 40) < 1e-10


def test_alpha_rows_shapes_and_bounds():
    params = ChainParams(BoundarySpec.power(1.0), SplitSpec.det(0.3), 10)
    rows = list(alpha_rows(params))
    assert [len(r) for r in rows] == list(range(2, 13))
    for r in rows:
        assert r[0] == 0.0 and r[-1] == 1.0
        assert np.all(np.diff(r) >= 0)
    with pytest.raises(ValueError):
        list(alpha_rows(params, 11))


def test_alpha_exp_family_does_not_overflow():
    params = ChainParams(BoundarySpec.exponential(q=0.4), SplitSpec.det(0.5), 2000)
    alpha = alpha_exact(params)
    assert np.all(np.isfinite(alpha))
    # restart w.p. 1 - 1/e per step; x_n = 0 needs a left restart and no jump since
    r = 1 - math.exp(-1)
    assert alpha[1] == pytest.approx(0.6 * r / (1 - 0.5 * (1 - r)), abs=1e-12)


def test_chain_identity_and_range():
    params = ChainParams(BoundarySpec.power(1.0, q=0.5), SplitSpec.fully_random(), 60, seed=2)
    path = simulate_chain(params, 60, 2000, RngStream(3).generator(2), record=True)
    assert path.x.shape == (2000, 61)
    assert np.all(path.tau <= np.arange(61))
    assert np.all(np.diff(path.tau, axis=1) >= 0)


def test_representation_check_passes_and_guards():
    params = ChainParams(BoundarySpec.power(1.0, q=0.3), SplitSpec.det(0.6), 100)
    rep = representation_check(params, 100, 10_000, seed=4)
    assert rep.passed, rep.to_dict()
    with pytest.raises(ValueError, match="10000"):
        representation_check(params, 100, 100, seed=4)


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_tau_cdf_exact_is_length_ratio(c):
    spec = BoundarySpec.power(c, r=3.0)
    params = ChainParams(spec, SplitSpec.det(0.5), 50)
    k = np.arange(51)
    assert np.allclose(tau_cdf_exact(params, 50), ((k + 1) / 51) ** c, rtol=1e-12)


def test_simulate_tau_law():
    params = ChainParams(BoundarySpec.power(1.0), SplitSpec.det(0.5), 200)
    tau, nu = simulate_tau(params, 200, 100_000, RngStream(5).generator(2))
    exact = tau_cdf_exact(params, 200)
    for k in (0, 10, 50, 100, 199):
        est = np.mean(tau <= k)
        se = math.sqrt(exact[k] * (1 - exact[k]) / 1e5)
        assert abs(est - exact[k]) < 4 * se + 1e-12
    assert abs(nu.mean() - 0.5) < 0.01


@pytest.mark.parametrize("spec", [BoundarySpec.power(2.0), BoundarySpec.logarithmic(), BoundarySpec.exponential()],
                         ids=["power2", "log", "exp"])
def test_tau_statistics_pass(spec):
    params = ChainParams(spec, SplitSpec.det(0.5), 500)
    rep = tau_statistics(params, 500, 10_000, seed=6)
    assert rep.passed, rep.to_dict()


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_alpha_is_distribution_function(c, q, p):
    params = ChainParams(BoundarySpec.power(c, q=q), SplitSpec.det(p), 30)
    alpha = alpha_exact(params)
    assert np.all(np.diff(alpha) >= -1e-12)
    assert np.all((alpha >= -1e-12) & (alpha <= 1 + 1e-12))
