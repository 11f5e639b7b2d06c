import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mzuq.errors import AlignmentError, NumericalInconsistencyError
from mzuq.galerkin import Burgers
from mzuq.integrate import Trajectory
from mzuq.polybasis import LegendreFamily
from mzuq.stats import (
    _clip_variance,
    mean_energy,
    mean_gradient,
    relative_error,
    stat_series,
    trajectory_relative_error,
    var_energy,
    var_gradient,
)


def _oracle(u, r_max):
    """Mean and variance of energy and gradient norm by sampling xi at Gauss-Legendre nodes."""
    x, w = np.polynomial.legendre.leggauss(16)
    w = 0.5 * w
    P = LegendreFamily(r_max).table(x)                   # (q, r)
    field = u[:, : r_max + 1] @ P.T                       # (k, q)
    k = np.arange(-len(u) // 2, len(u) // 2)
    energy = np.pi * np.sum(np.abs(field) ** 2, axis=0)   # (1/2) int |u|^2 dx
    grad = 2 * np.pi * np.sum((k ** 2)[:, None] * np.abs(field) ** 2, axis=0)
    out = []
    for q in (energy, grad):
        m = w @ q
        out += [m, w @ (q - m) ** 2]
    return out


def _random_state(rng, N=16, M=4):
    return (rng.standard_normal((N, M)) + 1j * rng.standard_normal((N, M))) / (1 + np.arange(M))


@pytest.mark.parametrize("r_max", [0, 1, 3])
def test_statistics_against_reconstruction(r_max):
    rng = np.random.default_rng(r_max)
    u = _random_state(rng)
    me, ve, mg, vg = _oracle(u, r_max)
    assert mean_energy(u, r_max) == pytest.approx(me, rel=1e-12)
    # variance = quartic moment - mean^2, so round-off scales with mean^2
    assert var_energy(u, r_max=r_max) == pytest.approx(ve, rel=1e-9, abs=1e-14 * me ** 2)
    assert mean_gradient(u, r_max) == pytest.approx(mg, rel=1e-12)
    assert var_gradient(u, r_max=r_max) == pytest.approx(vg, rel=1e-9, abs=1e-14 * mg ** 2)


def test_initial_burgers_statistics():
    u = Burgers().initial_state()
    assert mean_energy(u) == pytest.approx(2 * np.pi / 3, abs=1e-12)
    assert mean_gradient(u) == pytest.approx(4 * np.pi / 3, abs=1e-12)
    # E = pi (1 + xi)^2 / 2 with xi uniform: Var = (pi / 2)^2 Var[(1 + xi)^2] = (pi/2)^2 64/45
    assert var_energy(u) == pytest.approx((np.pi / 2) ** 2 * 64 / 45, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 3))
def test_variances_nonnegative(seed, r_max):
    u = _random_state(np.random.default_rng(seed))
    assert var_energy(u, r_max=r_max) >= 0.0
    assert var_gradient(u, r_max=r_max) >= 0.0


def test_deterministic_state_has_zero_variance():
    u = np.zeros((8, 3), complex)
    u[5, 0], u[3, 0] = 0.3 - 0.1j, 0.3 + 0.1j
    assert var_energy(u) == pytest.approx(0.0, abs=1e-14)
    assert var_gradient(u) == pytest.approx(0.0, abs=1e-14)


def test_clip_variance():
    assert _clip_variance(-1e-13, 1.0) == 0.0
    assert _clip_variance(0.25, 1.0) == 0.25
    with pytest.raises(NumericalInconsistencyError):
        _clip_variance(-1e-3, 1.0)


def test_stat_series_columns():
    u = Burgers(N=16, M=3).initial_state()
    s = stat_series([0.0, 0.1], [u, 0.5 * u])
    rows = list(s.rows())
    assert len(rows) == 2 and len(rows[0]) == 5
    assert s.mean_energy[1] == pytest.approx(0.25 * s.mean_energy[0])
    assert s.std_energy[1] == pytest.approx(0.25 * s.std_energy[0])


def test_relative_error_undefined_and_alignment():
    t = np.array([0.0, 1.0, 2.0])
    err = relative_error(t, [1.0, 0.0, -2.0], t, [1.5, 1.0, -1.0])
    assert err[0] == pytest.approx(0.5) and np.isnan(err[1]) and err[2] == pytest.approx(0.5)
    with pytest.raises(AlignmentError):
        relative_error(t, [1, 1, 1], t + 0.5, [1, 1, 1])
    with pytest.raises(AlignmentError):
        relative_error(t, [1, 1, 1], t[:2], [1, 1])


def test_trajectory_relative_error():
    t = np.array([0.0, 1.0])
    a = Trajectory(t, np.array([[1.0, 2.0], [2.0, 4.0]]))
    b = Trajectory(t, np.array([[1.0, 2.2], [2.0, 4.0]]))
    np.testing.assert_allclose(trajectory_relative_error(a, b, 1), [0.1, 0.0])
