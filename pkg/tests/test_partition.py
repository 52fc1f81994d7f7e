import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fraglab.partition import (
    BoundarySpec,
    BreakPoints,
    EmpiricalMeasure,
    Evolution,
    SplitSpec,
    evolve,
    evolve_step,
    normalize,
    q_sequence,
    read_breakpoints_csv,
    trivial_partition,
    write_breakpoints_csv,
)


def test_hand_iterations_constant_half():
    steps = evolve(BoundarySpec.constant(0.0, 1.0), SplitSpec.det(0.5), 3)
    assert np.allclose(steps[0].points, [0, 1])
    assert np.allclose(steps[1].points, [0, 0.5, 1])
    assert np.allclose(steps[2].points, [0, 0.25, 0.75, 1])
    assert np.allclose(steps[3].points, [0, 0.125, 0.5, 0.875, 1])


def test_hand_iteration_with_growth():
    # step 1 from [0, 1] to [-1, 2] with p = 0.25: interior 0.25*0 + 0.75*1
    bp = evolve_step(trivial_partition(0.0, 1.0), [0.25], (-1.0, 2.0))
    assert np.allclose(bp.points, [-1.0, 0.75, 2.0])
    bp = evolve_step(bp, [1.0, 0.0], (-1.0, 2.0))
    assert np.allclose(bp.points, [-1.0, -1.0, 2.0, 2.0])


@pytest.mark.parametrize("r,p", [(1.0, 0.5), (2.0, 0.3), (0.5, 0.9)])
def test_regular_case_is_lattice(r, p):
    n = 60
    for bp in evolve(BoundarySpec.regular_case(r, p), SplitSpec.det(p), n):
        k = np.arange(bp.n + 2)
        assert np.allclose(bp.points, r * (k - p * (bp.n + 1)), atol=1e-10)


def test_evolution_final_matches_steps():
    ev = Evolution(BoundarySpec.power(1.5, q=0.3), SplitSpec.fully_random(("beta", 2, 3)), 80, seed=5)
    steps = list(ev.steps())
    assert np.allclose(ev.final().points, steps[-1].points, rtol=0, atol=1e-12)
    again = list(Evolution(BoundarySpec.power(1.5, q=0.3), SplitSpec.fully_random(("beta", 2, 3)), 80, seed=5).steps())
    assert all(np.array_equal(a.points, b.points) for a, b in zip(steps, again))


def test_seed_required_for_random():
    with pytest.raises(ValueError, match="seed"):
        Evolution(BoundarySpec.poisson(), SplitSpec.det(0.5), 5)
    with pytest.raises(ValueError, match="seed"):
        Evolution(BoundarySpec.constant(), SplitSpec.fully_random(), 5)


def test_poisson_boundary_is_random_walk():
    ev = Evolution(BoundarySpec.poisson(), SplitSpec.det(0.5), 2000, seed=3)
    gaps_r = np.diff(ev.path.right)
    gaps_l = -np.diff(ev.path.left)
    assert np.all(gaps_r > 0) and np.all(gaps_l > 0)
    assert abs(gaps_r.mean() - 1) < 0.1 and abs(gaps_l.mean() - 1) < 0.1


@pytest.mark.parametrize("kind", ["constant", "log", "power", "exp"])
def test_families_length_and_q(kind):
    spec = {
        "constant": BoundarySpec.constant(-0.3, 0.7, q=0.4),
        "log": BoundarySpec.logarithmic(r=2.0, q=0.4),
        "power": BoundarySpec.power(0.7, r=2.0, q=0.4),
        "exp": BoundarySpec.exponential(r=2.0, q=0.4),
    }[kind]
    path = spec.realize(30)
    assert np.allclose(path.length, spec.length_fn(np.arange(31)), rtol=1e-12)
    if kind != "constant":
        assert np.allclose(q_sequence(path.left, path.right), 0.4)
    assert np.allclose(path.ratio[1:], path.length[:-1] / path.length[1:], rtol=1e-12)


def test_regime_metadata():
    assert BoundarySpec.constant().regime == 0.0
    assert BoundarySpec.logarithmic().regime == 0.0
    assert BoundarySpec.power(2.0).regime == 2.0
    assert BoundarySpec.exponential().regime == math.inf
    assert BoundarySpec.poisson().regime == 1.0


def test_custom_boundary_and_q_sequence():
    spec = BoundarySpec.custom([(0, 1), (-1, 1), (-1, 3), (-1, 3)], c=1.0, q=0.5)
    path = spec.realize(3)
    q = path.q[1:]
    assert q[0] == 0.0 and q[1] == 1.0 and math.isnan(q[2])
    with pytest.raises(ValueError, match="horizon"):
        spec.realize(4)


@pytest.mark.parametrize("table,msg", [
    ([(0, 1), (0.5, 1)], "non-increasing"),
    ([(0, 1), (0, 0.5)], "non-decreasing"),
    ([(1, 1)], "a\\[0,0\\] < a\\[0,1\\]"),
])
def test_boundary_validation(table, msg):
    with pytest.raises(ValueError, match=msg):
        BoundarySpec.custom(table, c=1.0, q=0.5)


def test_bad_specs():
    with pytest.raises(ValueError):
        BoundarySpec.power(0.0)
    with pytest.raises(ValueError):
        BoundarySpec.power(1.0, q=1.5)
    with pytest.raises(ValueError):
        SplitSpec.det(1.2)
    with pytest.raises(ValueError):
        SplitSpec.fully_random(("beta", 0, 1))
    with pytest.raises(ValueError):
        BoundarySpec("bogus")


def test_evolve_step_guards():
    bp = trivial_partition(0.0, 1.0)
    with pytest.raises(ValueError, match="proportion p\\[1,1\\]"):
        evolve_step(bp, [1.5], (0.0, 1.0))
    with pytest.raises(ValueError, match="index 0"):
        evolve_step(bp, [0.5], (0.1, 1.0))
    with pytest.raises(ValueError, match="index 2"):
        evolve_step(bp, [0.5], (0.0, 0.9))
    with pytest.raises(ValueError, match="2 proportions"):
        evolve_step(evolve_step(bp, [0.5], (0, 1)), [0.5], (0, 1))
    with pytest.raises(ValueError, match="normalized"):
        evolve_step(bp, [0.5], (0.0, np.inf))


def test_split_specs():
    assert SplitSpec.det((0.1, 0.2)).det_value(2) == 0.2
    with pytest.raises(ValueError):
        SplitSpec.det((0.1,)).row(2, None)
    rng = np.random.default_rng(0)
    row = SplitSpec.random_strat().row(5, rng)
    assert np.all(row == row[0])
    assert SplitSpec.fully_random(("beta", 1, 3)).mean == 0.25


def test_normalize_and_measure():
    bp = BreakPoints(3, np.array([-2.0, -1.0, 0.0, 1.0, 2.0]))
    m = normalize(bp)
    assert np.allclose(m.atoms, [0.25, 0.5, 0.75])
    assert m.weight == pytest.approx(1 / 3)
    assert np.allclose(m.cdf([0.2, 0.5, 1.0]), [0, 2 / 3, 1])
    assert m.mass(0.3, 0.8) == pytest.approx(2 / 3)
    assert EmpiricalMeasure(0, np.array([])).mass(0, 1) == 0.0
    with pytest.raises(ValueError, match="degenerate"):
        normalize(BreakPoints(0, np.array([1.0, 1.0])))


def test_csv_round_trip(tmp_path):
    steps = evolve(BoundarySpec.power(1.0), SplitSpec.det(0.3), 10)
    f = tmp_path / "bp.csv"
    write_breakpoints_csv(f, steps)
    back = read_breakpoints_csv(f)
    assert all(np.array_equal(a.points, b.points) for a, b in zip(steps, back))


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=1, max_size=25),
    st.floats(0, 3), st.floats(0, 3),
)
def test_step_preserves_order(ps, grow_l, grow_r):
    bp = trivial_partition(0.0, 1.0)
    for n in range(1, len(ps) + 1):
        bp = evolve_step(bp, np.full(n, ps[n - 1]), (bp.points[0] - grow_l, bp.points[-1] + grow_r))
        assert np.all(np.diff(bp.points) >= -1e-12)
