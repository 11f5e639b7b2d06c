"""Markovian reformulation of the memory term and adaptive memory-length estimation.

The memory integral over the last t_0 time units is split into n_0
subintervals, each closed with the trapezoidal rule.  This gives linear
auxiliary ODEs for w^{(i)}_{0k} driven by P e^{tL} PLQL u_0k.  The memory
length is fitted on the fly by matching d/dt sum_k |P u_k|^2 between the
full system and the reduced model written as an exponential convolution.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError, EstimationFailed, NoSwitchError, UnsupportedTermError
from .integrate import StepperConfig, Trajectory, heun_step, integrate

log = logging.getLogger(__name__)

Y_LO, Y_HI = 1e-12, 1.0 - 1e-12


@dataclass
class MemoryHierarchyState:
    """Auxiliary memory variables w^{(i)}_{mk}.

    ``w[m]`` has shape ``(subintervals[m],) + resolved_shape``.
    """
    lengths: tuple
    subintervals: tuple
    w: list

    @classmethod
    def zeros(cls, lengths, subintervals, resolved_shape, dtype=complex):
        lengths = tuple(float(x) for x in lengths)
        subintervals = tuple(int(n) for n in subintervals)
        if len(lengths) != len(subintervals) or not lengths:
            raise ConfigError("need one subinterval count per memory length")
        if any(x <= 0 for x in lengths) or any(n < 1 for n in subintervals):
            raise ConfigError("memory lengths must be positive and subintervals >= 1")
        if any(a < b for a, b in zip(lengths, lengths[1:])):
            raise ConfigError("memory lengths must be nonincreasing")
        w = [np.zeros((n,) + tuple(resolved_shape), dtype=dtype) for n in subintervals]
        return cls(lengths, subintervals, w)

    @property
    def depth(self) -> int:
        return len(self.lengths)

    def level_sum(self, m: int = 0):
        return self.w[m].sum(axis=0)


def hierarchy_rhs(w, projected_terms, lengths, subintervals):
    """Time derivative of every w^{(i)}_m under the trapezoidal closure.

    ``projected_terms[m]`` is P e^{tL} PL (QL)^m QL u_0k; the feed into the
    deepest level is taken as zero.
    """
    depth = len(lengths)
    if len(projected_terms) < depth:
        raise UnsupportedTermError(
            f"hierarchy depth {depth} needs {depth} projected terms, got {len(projected_terms)}")
    out = []
    for m in range(depth):
        n = subintervals[m]
        dtm = lengths[m] / n
        wm = w[m]
        d = np.empty_like(wm)
        # running alternating sum: S_i = sum_{j<i} (-1)^{i+j+1} w^{(j)}
        alt = np.zeros_like(wm[0])
        for i in range(1, n + 1):
            sign = 1.0 if i % 2 else -1.0
            d[i - 1] = -(2.0 / dtm) * wm[i - 1] + sign * 2.0 * projected_terms[m] + (4.0 / dtm) * alt
            if m + 1 < depth and i <= subintervals[m + 1]:
                d[i - 1] += w[m + 1][i - 1]
            alt = wm[i - 1] - alt
        out.append(d)
    return out


def t0_from_y(y: float, dt: float) -> float:
    if not 0.0 < y < 1.0:
        raise ConfigError(f"y must lie in (0, 1), got {y!r}")
    return -2.0 * dt / math.log(y)


def y_from_t0(t0: float, dt: float) -> float:
    return math.exp(-2.0 * dt / t0)


# ---------------------------------------------------------------------------
# Reduced models


def _memory_rhs(system, t0_len, n0):
    lengths, subs = (t0_len,), (n0,)

    def rhs(t, z):
        uh = z[0]
        w = z[1:]
        out = np.empty_like(z)
        if hasattr(system, "markovian_and_plql"):
            pl, plql = system.markovian_and_plql(t, uh)
        else:
            pl, plql = system.markovian_rhs(t, uh), system.plql(t, uh)
        out[0] = pl + w.sum(axis=0)
        out[1:] = hierarchy_rhs([w], [plql], lengths, subs)[0]
        return out
    return rhs


def run_reformulated_reduced(system, uhat0, t0_len: float, cfg: StepperConfig, n0: int = 1,
                             w0=None, t_start: float = 0.0) -> Trajectory:
    """Coupled Heun integration of the resolved state and the n_0 memory variables.

    Returned states hold the resolved variables; the summed memory w_0k is
    recorded in ``auxiliaries['w']``.
    """
    if not t0_len > 0:
        raise ConfigError("memory length must be positive")
    uhat0 = np.asarray(uhat0)
    z = np.zeros((1 + n0,) + uhat0.shape, dtype=np.result_type(uhat0.dtype, system.dtype))
    z[0] = uhat0
    if w0 is not None:
        w0 = np.asarray(w0)
        z[1:] = w0 if w0.shape == z[1:].shape else w0 / n0
    traj = integrate(_memory_rhs(system, t0_len, n0), z, cfg, t0=t_start)
    return Trajectory(traj.times, traj.states[:, 0], {"w": traj.states[:, 1:].sum(axis=1)})


def run_markovian(system, uhat0, cfg: StepperConfig, t_start: float = 0.0) -> Trajectory:
    return integrate(system.markovian_rhs, np.asarray(uhat0), cfg, t0=t_start)


def convolution_memory(samples: np.ndarray, t0_len: float, dt: float) -> np.ndarray:
    """Trapezoidal int_0^{t_n} exp(-lambda (t_n - s)) f(s) ds for every n.

    ``samples[j]`` is f at j dt (the integrand already includes the factor 2).
    """
    lam = 2.0 / t0_len
    n = len(samples)
    out = np.zeros_like(samples)
    decay = np.exp(-lam * dt * np.arange(n))
    for i in range(1, n):
        wts = decay[i::-1].copy()
        wts[0] *= 0.5
        wts[-1] *= 0.5
        out[i] = dt * np.tensordot(wts, samples[: i + 1], axes=(0, 0))
    return out


# ---------------------------------------------------------------------------
# Memory-length estimation


@dataclass
class EstimatorHistory:
    dt: float
    samples: list = field(default_factory=list)        # f_k(j dt), flattened complex
    rhs_targets: list = field(default_factory=list)
    y_hat: float | None = None
    y_prev: float | None = None
    eps_series: list = field(default_factory=list)
    t_min: float | None = None
    eps_min: float = math.inf

    @property
    def n_t(self) -> int:
        return len(self.samples) - 1

    def push(self, f_sample):
        self.samples.append(np.ravel(np.asarray(f_sample)))


@dataclass
class Estimate:
    y: float
    iterations: int
    method: str
    residual: float
    scale: float


def projected_moments(history: EstimatorHistory, resolved_state):
    """s_j = sum_k 2 Re{ f_k(j dt) conj(P u_k) } for j = 0..n_t."""
    F = np.asarray(history.samples)
    u = np.ravel(np.asarray(resolved_state))
    return 2.0 * np.real(F @ np.conj(u))


def memory_polynomial(s: np.ndarray, dt: float) -> np.ndarray:
    """Coefficients c_m (ascending powers of y) of the trapezoidal memory sum."""
    n = len(s) - 1
    c = np.empty(n + 1)
    c[0] = 0.5 * dt * s[n]
    if n >= 1:
        c[1:n] = dt * s[n - 1:0:-1]
        c[n] = 0.5 * dt * s[0]
    return c


def memory_integral(samples, y: float, dt: float):
    """I_k(t, t_0) evaluated directly from the displayed trapezoidal sum."""
    f = np.asarray(samples)
    n = len(f) - 1
    if n == 0:
        return 0.5 * dt * f[0] * 0.0
    inner = sum(y ** (n - j) * f[j] for j in range(1, n))
    return 0.5 * dt * (f[n] + 2.0 * inner + y ** n * f[0])


def _poly_and_derivative(c, y):
    n = len(c) - 1
    powers = y ** np.arange(n + 1)
    val = float(c @ powers)
    der = float((np.arange(1, n + 1) * c[1:]) @ powers[:-1]) if n >= 1 else 0.0
    return val, der


def estimate_y(history: EstimatorHistory, resolved_state, target: float, tol: float = 1e-14,
               max_iter: int = 50) -> Estimate:
    """Solve sum_k 2 Re{I_k(y) conj(Pu_k)} = target for y in (0, 1).

    Newton from the previous estimate (0.5 on the first call) with a
    bisection fallback when the iterate leaves (0, 1) or stalls.
    """
    if history.n_t < 1:
        raise EstimationFailed("need at least two samples to estimate the memory length")
    s = projected_moments(history, resolved_state)
    c = memory_polynomial(s, history.dt)
    c[0] -= target
    scale = max(abs(target), float(np.abs(c).sum()), 1e-300)

    y = history.y_hat if history.y_hat is not None else 0.5
    for it in range(1, max_iter + 1):
        val, der = _poly_and_derivative(c, y)
        if der == 0.0 or not np.isfinite(der):
            break
        step = val / der
        y_new = y - step
        if not Y_LO <= y_new <= Y_HI:
            break
        y = y_new
        if abs(step) < tol:
            res = _poly_and_derivative(c, y)[0]
            return Estimate(y, it, "newton", res, scale)

    lo_val = _poly_and_derivative(c, Y_LO)[0]
    hi_val = _poly_and_derivative(c, Y_HI)[0]
    if lo_val == 0.0:
        return Estimate(Y_LO, max_iter, "bisection", 0.0, scale)
    if np.sign(lo_val) == np.sign(hi_val):
        raise EstimationFailed("memory polynomial has no sign change in (0, 1)")
    lo, hi = Y_LO, Y_HI
    it = 0
    while hi - lo > tol and it < 200:
        mid = 0.5 * (lo + hi)
        mv = _poly_and_derivative(c, mid)[0]
        if np.sign(mv) == np.sign(lo_val):
            lo, lo_val = mid, mv
        else:
            hi = mid
        it += 1
    y = 0.5 * (lo + hi)
    return Estimate(y, max_iter + it, "bisection", _poly_and_derivative(c, y)[0], scale)


def epsilon_update(history: EstimatorHistory, y_new: float, t: float | None = None) -> float:
    """max over l = 1..n_t of |y_new^l - y_old^l|; updates the running minimum."""
    if history.y_hat is None:
        raise EstimationFailed("epsilon needs a previous accepted estimate")
    y_old = history.y_hat
    n = max(history.n_t, 1)
    l = np.arange(1, n + 1)
    eps = float(np.max(np.abs(y_new ** l - y_old ** l)))
    history.eps_series.append(eps)
    if eps < history.eps_min:
        history.eps_min = eps
        history.t_min = t
    return eps


# ---------------------------------------------------------------------------
# Adaptive algorithm


@dataclass
class AdaptiveResult:
    t0_hat: float
    t_min: float
    trajectory: Trajectory
    diagnostics: dict
    full_state_at_switch: np.ndarray
    w_at_switch: np.ndarray
    timings: dict


def estimate_memory_length(system, cfg: StepperConfig, window: int = 50, tol: float = 1e-14,
                           max_iter: int = 50, record_every: int = 1):
    """Phases 1-2: evolve the full system, estimate y at every step, stop once
    epsilon has not improved on its running minimum for ``window`` steps.

    Returns (history, diagnostics, switch) where ``switch`` carries the full
    state, time and estimate at the epsilon minimum.
    """
    if not system.has_plql:
        raise UnsupportedTermError(f"{system.name} has no derived PLQL term")
    dt = cfg.dt
    hist = EstimatorHistory(dt)
    diag = {k: [] for k in ("t", "y_hat", "t0_hat", "epsilon", "newton_iters")}
    u = system.initial_state()
    times, resolved = [], []
    switch = None
    since_min = 0
    n_steps = cfg.n_steps
    for step in range(n_steps + 1):
        t = step * dt
        uh = system.resolved(u)
        times.append(t)
        resolved.append(uh.copy())
        hist.push(2.0 * system.plql(t, uh))
        if step >= 1:
            target = float(2.0 * np.real(np.vdot(uh, system.pe_ql(t, u))))
            try:
                est = estimate_y(hist, uh, target, tol=tol, max_iter=max_iter)
            except EstimationFailed as exc:
                log.debug("estimation failed at t=%.4f: %s", t, exc)
                est = None
            if est is not None:
                eps = math.nan
                if hist.y_hat is not None:
                    improved = hist.eps_min
                    eps = epsilon_update(hist, est.y, t)
                    if eps < improved:
                        since_min = 0
                        switch = dict(t=t, step=step, y=est.y, state=u.copy(),
                                      n_samples=len(hist.samples))
                    else:
                        since_min += 1
                hist.y_prev, hist.y_hat = hist.y_hat, est.y
                if step % record_every == 0:
                    diag["t"].append(t)
                    diag["y_hat"].append(est.y)
                    diag["t0_hat"].append(t0_from_y(est.y, dt))
                    diag["epsilon"].append(eps)
                    diag["newton_iters"].append(est.iterations)
                if switch is not None and since_min >= window:
                    break
        if step < n_steps:
            u = heun_step(system.rhs, t, u, dt)
    else:
        raise NoSwitchError(
            f"epsilon still improving at T={cfg.T}; increase the horizon past the minimum")
    switch["t0_hat"] = t0_from_y(switch["y"], dt)
    switch["times"] = times[: switch["step"] + 1]
    switch["resolved"] = resolved[: switch["step"] + 1]
    samples = np.asarray(hist.samples[: switch["n_samples"]])
    shape = system.resolved(switch["state"]).shape
    switch["w"] = memory_integral(samples, switch["y"], dt).reshape(shape)
    return hist, {k: np.asarray(v) for k, v in diag.items()}, switch


def adaptive_run(system, cfg: StepperConfig, window: int = 50, n0: int = 1, w_init: str = "history",
                 tol: float = 1e-14, max_iter: int = 50) -> AdaptiveResult:
    """Estimate t_0 with the full system, then continue with the reduced model.

    The reduced phase starts from the resolved part of the full state at
    t_min.  With ``w_init="history"`` the memory variable starts from the
    trapezoidal convolution of the recorded samples at the estimated t_0;
    ``"zero"`` starts it from zero.
    """
    if w_init not in ("history", "zero"):
        raise ConfigError(f"w_init must be 'history' or 'zero', got {w_init!r}")
    tic = time.perf_counter()
    hist, diag, sw = estimate_memory_length(system, cfg, window, tol, max_iter)
    t_est = time.perf_counter() - tic
    t_min = sw["t"]
    n_rem = cfg.n_steps - sw["step"]
    if n_rem < 1:
        raise NoSwitchError("switch time reached the end of the horizon")
    w0 = sw["w"] if w_init == "history" else np.zeros_like(sw["w"])
    tic = time.perf_counter()
    red = run_reformulated_reduced(system, system.resolved(sw["state"]), sw["t0_hat"],
                                   StepperConfig(cfg.dt, n_rem * cfg.dt), n0=n0, w0=w0, t_start=t_min)
    t_red = time.perf_counter() - tic
    pre_t = np.asarray(sw["times"])
    pre_u = np.asarray(sw["resolved"])
    stitched = Trajectory(np.concatenate([pre_t, red.times[1:]]),
                          np.concatenate([pre_u, red.states[1:]]),
                          {"w": np.concatenate([np.zeros((len(pre_t) - 1,) + w0.shape, dtype=red.auxiliaries["w"].dtype),
                                                red.auxiliaries["w"]])})
    return AdaptiveResult(sw["t0_hat"], t_min, stitched, diag, sw["state"], w0,
                          {"estimate": t_est, "reduced": t_red})
