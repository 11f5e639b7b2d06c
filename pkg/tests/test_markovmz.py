import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mzuq.errors import ConfigError, EstimationFailed, NoSwitchError, UnsupportedTermError
from mzuq.galerkin import Burgers, LinearODE
from mzuq.integrate import StepperConfig, integrate
from mzuq.markovmz import (
    EstimatorHistory,
    MemoryHierarchyState,
    adaptive_run,
    convolution_memory,
    epsilon_update,
    estimate_memory_length,
    estimate_y,
    hierarchy_rhs,
    memory_integral,
    memory_polynomial,
    projected_moments,
    run_markovian,
    run_reformulated_reduced,
    t0_from_y,
    y_from_t0,
)

rng = np.random.default_rng(11)


def _aux_vs_convolution(dt, t0=0.4, T=2.0):
    f = lambda t: np.cos(3 * t) + 0.5 * t
    rhs = lambda t, w: hierarchy_rhs([w], [f(t) * np.ones(1)], (t0,), (1,))[0]
    traj = integrate(rhs, np.zeros((1, 1)), StepperConfig(dt, T))
    conv = convolution_memory(2 * f(traj.times)[:, None], t0, dt)
    return np.abs(traj.states[:, 0, 0] - conv[:, 0]).max()


def test_closure_equivalence_second_order():
    errs = [_aux_vs_convolution(dt) for dt in (2e-3, 1e-3, 5e-4)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all((orders >= 1.9) & (orders <= 2.1))


def test_convolution_memory_exact_for_constant():
    # int_0^t e^{-lam (t-s)} ds with lam = 2 / t0
    dt, t0 = 1e-3, 0.5
    n = 2001
    got = convolution_memory(np.ones(n), t0, dt)
    t = dt * np.arange(n)
    lam = 2 / t0
    np.testing.assert_allclose(got, (1 - np.exp(-lam * t)) / lam, atol=1e-6)


def test_hierarchy_general_depth():
    # n0 = 2 subintervals: signs alternate and the running sum couples the levels
    w = [np.array([[1.0], [2.0]])]
    out = hierarchy_rhs(w, [np.array([0.5])], (0.4,), (2,))[0]
    dtm = 0.2
    np.testing.assert_allclose(out[0], -(2 / dtm) * 1.0 + 2 * 0.5)
    np.testing.assert_allclose(out[1], -(2 / dtm) * 2.0 - 2 * 0.5 + (4 / dtm) * 1.0)
    with pytest.raises(UnsupportedTermError):
        hierarchy_rhs([w[0], w[0]], [np.array([0.5])], (0.4, 0.4), (2, 2))


def test_hierarchy_state_container():
    st_ = MemoryHierarchyState.zeros((0.4,), (3,), (5, 2))
    assert st_.depth == 1
    assert st_.w[0].shape == (3, 5, 2)
    np.testing.assert_array_equal(st_.level_sum(), np.zeros((5, 2)))


@given(st.floats(1e-3, 10.0), st.floats(1e-4, 1e-2))
def test_t0_round_trip(t0, dt):
    assert t0_from_y(y_from_t0(t0, dt), dt) == pytest.approx(t0, rel=1e-9)


def test_t0_rejects_out_of_range():
    for y in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ConfigError):
            t0_from_y(y, 1e-3)


def test_memory_polynomial_matches_direct_sum():
    dt = 0.01
    samples = rng.standard_normal((9, 4)) + 1j * rng.standard_normal((9, 4))
    hist = EstimatorHistory(dt, [s for s in samples])
    u = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    c = memory_polynomial(projected_moments(hist, u), dt)
    for y in (0.1, 0.5, 0.93):
        direct = 2 * np.real(np.vdot(u, memory_integral(samples, y, dt)))
        assert np.polyval(c[::-1], y) == pytest.approx(direct, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 0.98), st.integers(3, 40))
def test_manufactured_estimate_recovers_y(y_true, n):
    local = np.random.default_rng(n)
    dt = 1e-3
    samples = local.standard_normal((n, 3)) + 1j * local.standard_normal((n, 3))
    u = local.standard_normal(3) + 1j * local.standard_normal(3)
    target = 2 * np.real(np.vdot(u, memory_integral(samples, y_true, dt)))
    hist = EstimatorHistory(dt, [s for s in samples])
    try:
        est = estimate_y(hist, u, target)
    except EstimationFailed:
        return  # several roots or none inside (0, 1) are possible for random data
    val = 2 * np.real(np.vdot(u, memory_integral(samples, est.y, dt)))
    assert val == pytest.approx(target, abs=1e-10 * max(1.0, abs(target)))


def test_manufactured_exponential_memory_exact_recovery():
    # single decaying sample stream: the memory polynomial is monotone in y
    dt = 1e-3
    n = 200
    samples = np.exp(-np.arange(n) * dt)[:, None] * np.ones((1, 2))
    u = np.ones(2)
    y_true = y_from_t0(0.3783, dt)
    target = 2 * np.real(np.vdot(u, memory_integral(samples, y_true, dt)))
    hist = EstimatorHistory(dt, [s for s in samples])
    cold = estimate_y(hist, u, target)
    assert t0_from_y(cold.y, dt) == pytest.approx(0.3783, rel=1e-8)
    # warm start from a nearby previous estimate, as inside the adaptive loop
    hist.y_hat = y_from_t0(0.35, dt)
    est = estimate_y(hist, u, target)
    assert est.method == "newton" and est.iterations <= 10
    assert t0_from_y(est.y, dt) == pytest.approx(0.3783, rel=1e-8)


def test_estimate_needs_two_samples_and_a_root():
    hist = EstimatorHistory(1e-3, [np.ones(2)])
    with pytest.raises(EstimationFailed):
        estimate_y(hist, np.ones(2), 0.0)
    hist = EstimatorHistory(1e-3, [np.ones(2), np.ones(2), np.ones(2)])
    with pytest.raises(EstimationFailed):
        estimate_y(hist, np.ones(2), -5.0)


def test_epsilon_examples():
    hist = EstimatorHistory(1e-3, [np.ones(1)] * 4)
    hist.y_hat = 0.5
    eps = epsilon_update(hist, 0.6, t=0.1)
    # n_t = 3: max over l = 1..3 of |0.6^l - 0.5^l| = 0.1 at l = 1 or 0.11 at l = 2
    assert eps == pytest.approx(max(0.1, 0.11, 0.216 - 0.125))
    assert hist.eps_min == eps and hist.t_min == 0.1
    hist.y_hat = 0.6
    assert epsilon_update(hist, 0.6, t=0.2) == 0.0
    assert hist.t_min == 0.2
    with pytest.raises(EstimationFailed):
        epsilon_update(EstimatorHistory(1e-3), 0.5)


def test_linear_ode_has_no_plql():
    with pytest.raises(UnsupportedTermError):
        estimate_memory_length(LinearODE(), StepperConfig(0.01, 1.0))


@pytest.fixture(scope="module")
def small_burgers():
    return Burgers(N=32, M=4, nu=0.05, Lam=2)


def test_reformulated_zero_memory_limit(small_burgers):
    # a short memory length makes w small: the reduced run approaches the Markovian one
    b = small_burgers
    cfg = StepperConfig(1e-3, 0.2, record_every=50)
    uh0 = b.resolved(b.initial_state())
    mk = run_markovian(b, uh0, cfg)
    short = run_reformulated_reduced(b, uh0, 0.01, cfg)
    longer = run_reformulated_reduced(b, uh0, 0.3, cfg)
    d_short = np.abs(short.states - mk.states).max()
    d_long = np.abs(longer.states - mk.states).max()
    assert d_short < 0.1 * d_long
    assert longer.auxiliaries["w"].shape == longer.states.shape
    with pytest.raises(ConfigError):
        run_reformulated_reduced(b, uh0, 0.0, cfg)


def test_reformulated_subintervals_agree(small_burgers):
    b = small_burgers
    cfg = StepperConfig(1e-3, 0.1, record_every=100)
    uh0 = b.resolved(b.initial_state())
    one = run_reformulated_reduced(b, uh0, 0.3, cfg, n0=1)
    three = run_reformulated_reduced(b, uh0, 0.3, cfg, n0=3)
    assert np.all(np.isfinite(three.states))
    assert np.abs(one.states - three.states).max() < 0.05 * np.abs(one.states).max()


def test_no_switch_within_short_horizon(small_burgers):
    with pytest.raises(NoSwitchError):
        estimate_memory_length(small_burgers, StepperConfig(1e-3, 0.02))


def test_adaptive_run_small(small_burgers):
    b = small_burgers
    res = adaptive_run(b, StepperConfig(1e-3, 0.6), window=20)
    assert 0 < res.t_min < 0.6 and res.t0_hat > 0
    traj = res.trajectory
    assert len(traj.times) == 601
    np.testing.assert_allclose(np.diff(traj.times), 1e-3, atol=1e-12)
    assert np.all(np.nan_to_num(res.diagnostics["epsilon"], nan=0.0) >= 0)
    assert res.diagnostics["newton_iters"].max() <= 10
    zero = adaptive_run(b, StepperConfig(1e-3, 0.6), window=20, w_init="zero")
    assert not np.any(zero.w_at_switch)
    with pytest.raises(ConfigError):
        adaptive_run(b, StepperConfig(1e-3, 0.6), w_init="bogus")
