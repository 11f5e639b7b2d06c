import logging
import math

import numpy as np
import pytest

from mzuq.errors import ConfigError, DivergenceError
from mzuq.integrate import StepperConfig, heun_step, integrate


def _rhs(t, y):
    return -y + np.sin(t)


def _exact(t):
    # y(0) = 1
    return 1.5 * math.exp(-t) + 0.5 * (math.sin(t) - math.cos(t))


def test_heun_second_order():
    errs = []
    for dt in (0.02, 0.01, 0.005):
        traj = integrate(_rhs, np.array([1.0]), StepperConfig(dt, 2.0))
        errs.append(abs(traj.final[0] - _exact(2.0)))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all((orders > 1.9) & (orders < 2.1))


def test_single_step_formula():
    u = np.array([2.0])
    k1 = -2.0
    k2 = -(2.0 + 0.1 * k1)
    assert heun_step(lambda t, y: -y, 0.0, u, 0.1)[0] == pytest.approx(2.0 + 0.05 * (k1 + k2))


def test_record_every_and_callback():
    seen = []

    def cb(step, t, u):
        seen.append(step)
        return {"twice": 2 * u}

    traj = integrate(lambda t, y: -y, np.ones(2), StepperConfig(0.1, 1.0, record_every=5), callback=cb)
    np.testing.assert_allclose(traj.times, [0.0, 0.5, 1.0])
    assert seen == list(range(11))
    np.testing.assert_array_equal(traj.auxiliaries["twice"], 2 * traj.states)


def test_start_time_offset():
    traj = integrate(lambda t, y: np.ones_like(y), np.zeros(1), StepperConfig(0.25, 1.0), t0=3.0)
    assert traj.times[0] == 3.0 and traj.times[-1] == pytest.approx(4.0)
    assert traj.final[0] == pytest.approx(1.0)


def test_divergence_reports_step():
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergenceError) as info:
            integrate(lambda t, y: y * y, np.array([1.0]), StepperConfig(0.5, 100.0))
    assert info.value.step is not None and info.value.step > 0


def test_bad_config():
    with pytest.raises(ConfigError):
        StepperConfig(0.0, 1.0)
    with pytest.raises(ConfigError):
        StepperConfig(0.1, 1.0, record_every=0)


def test_non_integer_horizon_warns(caplog):
    with caplog.at_level(logging.WARNING):
        assert StepperConfig(0.3, 1.0).n_steps == 3
    assert "truncating" in caplog.text
