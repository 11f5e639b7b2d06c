"""Fixed-step modified Euler (Heun) stepping and trajectory recording."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    T: float
    record_every: int = 1

    def __post_init__(self):
        if not self.dt > 0 or not self.T > 0:
            raise ConfigError("dt and T must be positive")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        ratio = self.T / self.dt
        n = round(ratio)
        if abs(ratio - n) > 1e-9 * max(1.0, ratio):
            n = math.floor(ratio)
            log.warning("T/dt = %.12g is not an integer; truncating to %d steps", ratio, n)
        if n % self.record_every:
            log.warning("%d steps not a multiple of record_every=%d; last record at step %d",
                        n, self.record_every, n - n % self.record_every)
        return n


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    auxiliaries: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    @property
    def final(self):
        return self.states[-1]


def _check(x, t, step=None):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite value at t={t:.6g}", t=t, step=step)


def heun_step(rhs, t: float, u, dt: float):
    """u + dt/2 (k1 + k2) with the Euler predictor for k2."""
    if not dt > 0:
        raise ConfigError("dt must be positive")
    k1 = rhs(t, u)
    _check(k1, t)
    k2 = rhs(t + dt, u + dt * k1)
    _check(k2, t + dt)
    return u + 0.5 * dt * (k1 + k2)


def integrate(rhs, u0, cfg: StepperConfig, t0: float = 0.0, callback=None) -> Trajectory:
    """Heun integration of du/dt = rhs(t, u) for ``cfg.n_steps`` steps.

    ``callback(step, t, u)`` runs after every step (and at step 0) and may
    return a dict of auxiliary channels to record alongside the state.
    """
    u = np.array(u0, copy=True)
    _check(u, t0, 0)
    n = cfg.n_steps
    every = cfg.record_every
    times, states = [t0], [u.copy()]
    aux: dict = {}

    def _record_aux(step, t, state):
        if callback is None:
            return
        extra = callback(step, t, state)
        if extra and step % every == 0:
            for key, val in extra.items():
                aux.setdefault(key, []).append(val)

    _record_aux(0, t0, u)
    for step in range(1, n + 1):
        t = t0 + (step - 1) * cfg.dt
        try:
            u = heun_step(rhs, t, u, cfg.dt)
        except DivergenceError as exc:
            raise DivergenceError(f"diverged at step {step} (t={t:.6g})", t=t, step=step) from exc
        tn = t0 + step * cfg.dt
        if step % every == 0:
            times.append(tn)
            states.append(u.copy())
        _record_aux(step, tn, u)
    return Trajectory(np.array(times), np.array(states), {k: np.array(v) for k, v in aux.items()})
