"""Energy/gradient statistics of Burgers chaos states and model-comparison errors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, NumericalInconsistencyError
from .polybasis import LegendreFamily, quad_tensor

UNDEFINED_REF = 1e-13
TWO_PI = 2.0 * np.pi


@dataclass
class StatSeries:
    times: np.ndarray
    mean_energy: np.ndarray
    std_energy: np.ndarray
    mean_gradient: np.ndarray
    std_gradient: np.ndarray

    def rows(self):
        return zip(self.times, self.mean_energy, self.std_energy, self.mean_gradient, self.std_gradient)


def _wavenumbers(n_modes: int) -> np.ndarray:
    return np.arange(-n_modes // 2, n_modes // 2, dtype=float)


def _weights(r_max: int) -> np.ndarray:
    return 1.0 / (2.0 * np.arange(r_max + 1) + 1.0)


def mean_energy(state, r_max: int = 1) -> float:
    """(1/2) sum_k sum_{r<=r_max} 2 pi |u_kr|^2 / (2r + 1)."""
    u = np.asarray(state)[:, : r_max + 1]
    return float(0.5 * TWO_PI * (np.abs(u) ** 2 @ _weights(r_max)).sum())


def mean_gradient(state, r_max: int = 1) -> float:
    """sum_k sum_{r<=r_max} 2 pi k^2 |u_kr|^2 / (2r + 1)."""
    u = np.asarray(state)[:, : r_max + 1]
    k2 = _wavenumbers(len(u)) ** 2
    return float(TWO_PI * (k2 @ (np.abs(u) ** 2 @ _weights(r_max))))


def _clip_variance(var, mean):
    scale = max(1.0, mean * mean)
    if var < 0.0:
        if var < -1e-9 * scale:
            raise NumericalInconsistencyError(f"negative variance {var:.3e}")
        return 0.0
    return var


def _second_moment(u, weight_k, quad):
    # S_{r1 r2} = sum_k w_k u_{k r1} conj(u_{k r2}); contraction with d is then real
    S = (u * weight_k[:, None]).T @ np.conj(u)
    return float(np.real(np.einsum("ab,cd,abcd->", S, S, quad)))


def var_energy(state, quad=None, r_max: int = 1) -> float:
    u = np.asarray(state)[:, : r_max + 1]
    if quad is None:
        quad = quad_tensor(LegendreFamily(r_max), r_max)
    quad = quad[: r_max + 1, : r_max + 1, : r_max + 1, : r_max + 1]
    second = (0.25 * TWO_PI ** 2) * _second_moment(u, np.ones(len(u)), quad)
    m = mean_energy(state, r_max)
    return _clip_variance(second - m * m, m)


def var_gradient(state, quad=None, r_max: int = 1) -> float:
    u = np.asarray(state)[:, : r_max + 1]
    if quad is None:
        quad = quad_tensor(LegendreFamily(r_max), r_max)
    quad = quad[: r_max + 1, : r_max + 1, : r_max + 1, : r_max + 1]
    k2 = _wavenumbers(len(u)) ** 2
    second = TWO_PI ** 2 * _second_moment(u, k2, quad)
    m = mean_gradient(state, r_max)
    return _clip_variance(second - m * m, m)


def stat_series(times, states, r_max: int = 1) -> StatSeries:
    quad = quad_tensor(LegendreFamily(r_max), r_max)
    me, se, mg, sg = [], [], [], []
    for u in states:
        me.append(mean_energy(u, r_max))
        se.append(np.sqrt(var_energy(u, quad, r_max)))
        mg.append(mean_gradient(u, r_max))
        sg.append(np.sqrt(var_gradient(u, quad, r_max)))
    return StatSeries(np.asarray(times), *(np.array(x) for x in (me, se, mg, sg)))


def relative_error(ref_times, ref_values, cand_times, cand_values):
    """|cand - ref| / |ref| per time; NaN where |ref| < 1e-13."""
    ref_times = np.asarray(ref_times)
    cand_times = np.asarray(cand_times)
    if ref_times.shape != cand_times.shape or not np.allclose(ref_times, cand_times, rtol=0, atol=1e-9):
        raise AlignmentError("reference and candidate time grids differ")
    ref = np.asarray(ref_values)
    cand = np.asarray(cand_values)
    mag = np.abs(ref)
    out = np.full(mag.shape, np.nan)
    ok = mag >= UNDEFINED_REF
    out[ok] = np.abs(cand - ref)[ok] / mag[ok]
    return out


def trajectory_relative_error(reference, candidate, index):
    """Relative error of one state component between two aligned trajectories."""
    return relative_error(reference.times, np.asarray(reference.states)[:, index],
                          candidate.times, np.asarray(candidate.states)[:, index])
