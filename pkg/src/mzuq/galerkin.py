"""Chaos-Galerkin ODE systems and their projected right-hand-side terms.

Three problems are built here:

* ``LinearODE``: du/dt = -kappa u with kappa uniform on [0, 1]
  (orthonormal Legendre, chaos orders 0..M, resolved 0..Lambda).
* ``Particle``: du/dt = u - u^3 + sin(t + phase) xi in a double well
  (orthonormal Legendre, orders 0..M, resolved 0..Lambda).
* ``Burgers``: viscous Burgers on [0, 2 pi] with an uncertain amplitude,
  Fourier modes k in [-N/2, N/2 - 1] times standard Legendre orders
  0..M-1, resolved orders r < Lambda.

The projection P is the zero-fill of the unresolved coordinates, so the
Markovian term is the full right-hand side evaluated at (u_hat, 0).
State arrays may carry arbitrary leading batch axes for the scalar problems.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UnsupportedTermError
from .polybasis import (
    C_RATIO,
    ORTHONORMAL,
    STANDARD,
    LegendreFamily,
    gauss_legendre,
    quad_tensor,
    triple_tensor,
)

PROBLEMS = ("linear-ode", "particle", "burgers")


@dataclass(frozen=True)
class VariableIndex:
    chaos_order: int
    mode: int | None = None


@dataclass(frozen=True)
class Partition:
    resolved: frozenset
    unresolved: frozenset


@dataclass
class ProblemConfig:
    problem: str = "linear-ode"
    M: int = 6
    Lam: int = 1
    u_init: float = 1.0
    forcing_phase: float = 0.0
    nu: float = 0.03
    N: int = 196
    alpha0: float = 1.0
    alpha1: float = 1.0
    dt: float = 0.01
    T: float = 10.0

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if not 1 <= self.Lam < self.M + 1:
            raise ConfigError("need 1 <= Lambda < M + 1")
        if self.problem == "burgers":
            if self.Lam >= self.M:
                raise ConfigError("Burgers needs Lambda < M")
            if self.nu <= 0:
                raise ConfigError("viscosity must be positive")
            if self.N < 2 or self.N % 2:
                raise ConfigError("N must be even")
        if self.dt <= 0 or self.T <= 0:
            raise ConfigError("dt and T must be positive")
        return self


class GalerkinSystem:
    """Common partition/projection machinery; subclasses supply ``rhs``."""

    name = "system"
    dtype = float
    has_plql = False

    def rhs(self, t, u):
        raise NotImplementedError

    # -- partition ---------------------------------------------------------
    @property
    def state_shape(self) -> tuple:
        raise NotImplementedError

    @property
    def n_resolved_orders(self) -> int:
        raise NotImplementedError

    def resolved(self, u):
        return u[..., : self.n_resolved_orders]

    def unresolved(self, u):
        return u[..., self.n_resolved_orders:]

    def embed(self, uhat):
        """Zero-fill the unresolved coordinates."""
        uhat = np.asarray(uhat)
        shape = uhat.shape[:-1] + (self.state_shape[-1],)
        out = np.zeros(shape, dtype=np.result_type(uhat.dtype, self.dtype))
        out[..., : self.n_resolved_orders] = uhat
        return out

    # -- projected terms ---------------------------------------------------
    def markovian_rhs(self, t, uhat):
        """PL u_0: the full right-hand side at (u_hat, 0), resolved rows."""
        return self.resolved(self.rhs(t, self.embed(uhat)))

    def fluctuation(self, t, u):
        """QL u_0 = R(u) - R(u_hat, 0) on the resolved rows."""
        return self.resolved(self.rhs(t, u)) - self.markovian_rhs(t, self.resolved(u))

    def plql(self, t, uhat):
        raise UnsupportedTermError(f"{self.name}: no closed form for PLQL")

    def pe_ql(self, t, u):
        raise UnsupportedTermError(f"{self.name}: no closed form for Pe^tL QL")

    def jvp(self, t, u, v):
        """Directional derivative of ``rhs`` in the state at u along v."""
        raise NotImplementedError

    def initial_state(self):
        raise NotImplementedError


class _ScalarChaosSystem(GalerkinSystem):
    """Chaos coefficients u_0..u_M of a scalar random ODE."""

    def __init__(self, M: int, Lam: int, u_init: float):
        if M < 1:
            raise ConfigError("M must be >= 1")
        if not 1 <= Lam <= M:
            raise ConfigError("need 1 <= Lambda <= M")
        self.M = M
        self.Lam = Lam
        self.u_init = float(u_init)

    @property
    def state_shape(self):
        return (self.M + 1,)

    @property
    def n_resolved_orders(self):
        return self.Lam + 1

    @property
    def partition(self) -> Partition:
        res = frozenset(VariableIndex(r) for r in range(self.Lam + 1))
        unres = frozenset(VariableIndex(r) for r in range(self.Lam + 1, self.M + 1))
        return Partition(res, unres)

    def initial_state(self):
        u = np.zeros(self.M + 1)
        u[0] = self.u_init
        return u


class LinearODE(_ScalarChaosSystem):
    name = "linear-ode"

    def __init__(self, M: int = 6, u_init: float = 1.0, Lam: int = 1):
        super().__init__(M, Lam, u_init)
        fam = LegendreFamily(M, ORTHONORMAL)
        self.e = triple_tensor(fam, M)
        # kappa = (xi + 1)/2 = k0 phi_0 + k1 phi_1 with phi_1 = sqrt(3) xi
        self.kappa = np.array([0.5, 0.5 / math.sqrt(3.0)])
        self.K = np.einsum("i,ijr->rj", self.kappa, self.e[:2])

    def rhs(self, t, u):
        return -np.asarray(u) @ self.K.T

    def jvp(self, t, u, v):
        return -np.asarray(v) @ self.K.T


def build_linear_ode(M: int = 6, u_init: float = 1.0, Lam: int = 1) -> LinearODE:
    return LinearODE(M, u_init, Lam)


def exact_linear_ode(M: int, u_init: float, t, n_points: int = 64) -> np.ndarray:
    """Chaos coefficients of u_init exp(-kappa t) by Gauss-Legendre projection.

    Returns shape ``(len(t), M + 1)``.
    """
    xi, w = gauss_legendre(n_points)
    w = 0.5 * w
    phi = LegendreFamily(M, ORTHONORMAL).table(xi)
    kappa = 0.5 * (xi + 1.0)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    sol = u_init * np.exp(-np.outer(t, kappa))
    return sol @ (w[:, None] * phi)


class Particle(_ScalarChaosSystem):
    """Randomly forced particle in a double well, with explicit time forcing.

    The autonomous form appends tau with d tau/dt = 1; ``autonomous_rhs``
    acts on states ``(..., M + 2)`` whose last entry is tau.
    """

    name = "particle"

    def __init__(self, M: int = 6, u_init: float = 1.0, phase: float = 0.0, Lam: int = 1,
                 forcing_amplitude: float = 1.0):
        super().__init__(M, Lam, u_init)
        self.phase = float(phase)
        self.forcing_amplitude = float(forcing_amplitude)
        self.e4 = quad_tensor(LegendreFamily(M, ORTHONORMAL), M)
        self._e4flat = self.e4.reshape(-1, M + 1)

    def forcing(self, t):
        f = np.zeros(self.M + 1)
        f[1] = self.forcing_amplitude * math.sin(t + self.phase) / math.sqrt(3.0)
        return f

    def _triple(self, a, b, c):
        # sum_{jkm} e_{jkmi} a_j b_k c_m as one matmul over the flattened jkm axis
        n = self.M + 1
        abc = (a[..., :, None, None] * b[..., None, :, None] * c[..., None, None, :])
        return abc.reshape(abc.shape[:-3] + (n ** 3,)) @ self._e4flat

    def cubic(self, u):
        u = np.asarray(u, dtype=float)
        return self._triple(u, u, u)

    def rhs(self, t, u):
        u = np.asarray(u)
        return u - self.cubic(u) + self.forcing(t)

    def jvp(self, t, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return v - 3.0 * self._triple(v, u, u)

    def autonomous_rhs(self, t, z):
        z = np.asarray(z)
        out = np.empty_like(z)
        tau = z[..., -1]
        u = z[..., :-1]
        f1 = self.forcing_amplitude * np.sin(tau + self.phase) / math.sqrt(3.0)
        out[..., :-1] = u - self.cubic(u)
        out[..., 1] += f1
        out[..., -1] = 1.0
        return out


def build_particle(M: int = 6, u_init: float = 1.0, phase: float = 0.0, Lam: int = 1) -> Particle:
    return Particle(M, u_init, phase, Lam)


class Burgers(GalerkinSystem):
    """Fourier-Legendre Galerkin system for viscous Burgers.

    State arrays have shape (N, M): row ``k + N/2`` holds wavenumber k,
    column r the standard-Legendre coefficient.  Quadratic terms are exact
    truncated convolutions over p + q = k with p, q in F (no dealiasing).
    """

    name = "burgers"
    dtype = complex
    has_plql = True

    def __init__(self, N: int = 196, M: int = 7, nu: float = 0.03, Lam: int = 2,
                 alpha0: float = 1.0, alpha1: float = 1.0):
        if N < 2 or N % 2:
            raise ConfigError("N must be even")
        if M < 1 or not 1 <= Lam < M:
            raise ConfigError("need M >= 2 and 1 <= Lambda < M")
        if nu <= 0:
            raise ConfigError("viscosity must be positive")
        self.N, self.M, self.nu, self.Lam = N, M, float(nu), Lam
        self.alpha = (float(alpha0), float(alpha1))
        self.k = np.arange(-N // 2, N // 2, dtype=float)
        self.c = triple_tensor(LegendreFamily(M - 1, STANDARD), M - 1, C_RATIO)
        self._adv = -0.5j * self.k
        self._visc = -self.nu * self.k ** 2

    @property
    def state_shape(self):
        return (self.N, self.M)

    @property
    def n_resolved_orders(self):
        return self.Lam

    @property
    def partition(self) -> Partition:
        F = range(-self.N // 2, self.N // 2)
        res = frozenset(VariableIndex(r, k) for k in F for r in range(self.Lam))
        unres = frozenset(VariableIndex(r, k) for k in F for r in range(self.Lam, self.M))
        return Partition(res, unres)

    def index(self, k: int) -> int:
        return k + self.N // 2

    def initial_state(self):
        u = np.zeros((self.N, self.M), dtype=complex)
        for r, a in enumerate(self.alpha[: self.M]):
            u[self.index(1), r] = -0.5j * a
            u[self.index(-1), r] = 0.5j * a
        return u

    def embed(self, uhat):
        out = np.zeros((self.N, self.M), dtype=complex)
        out[:, : self.Lam] = uhat
        return out

    # -- convolution kernels -----------------------------------------------
    def conv(self, a, b):
        """sum_{p+q=k, p,q in F} a_p b_q for k in F, by direct summation."""
        h = self.N // 2
        return np.convolve(a, b)[h: h + self.N]

    def _pair_sum(self, u, orders, rows):
        """sum_{l,m in orders} c[l,m,r] conv(u_l, u_m) for r in rows (shape N x len(rows))."""
        out = np.zeros((self.N, len(rows)), dtype=complex)
        for a, l in enumerate(orders):
            for m in orders[a:]:
                coef = self.c[l, m, rows] * (1.0 if l == m else 2.0)
                if not coef.any():
                    continue
                out += np.outer(self.conv(u[:, l], u[:, m]), coef)
        return out

    def _cross_sum(self, left, lorders, right, morders, rows):
        """sum_{l in lorders, m in morders} c[l,m,r] conv(left_l, right_m)."""
        out = np.zeros((self.N, len(rows)), dtype=complex)
        for m in morders:
            for j, r in enumerate(rows):
                coef = self.c[lorders, m, r]
                if not coef.any():
                    continue
                out[:, j] += self.conv(left[:, lorders] @ coef, right[:, m])
        return out

    # -- right-hand sides --------------------------------------------------
    def rhs(self, t, u):
        rows = list(range(self.M))
        nl = self._pair_sum(u, rows, rows)
        return self._adv[:, None] * nl + self._visc[:, None] * u

    def markovian_full(self, uhat):
        """R(u_hat, 0) on every chaos row (unresolved rows included)."""
        res = list(range(self.Lam))
        nl = self._pair_sum(uhat, res, list(range(self.M)))
        lin = np.zeros((self.N, self.M), dtype=complex)
        lin[:, : self.Lam] = self._visc[:, None] * uhat
        return self._adv[:, None] * nl + lin

    def markovian_rhs(self, t, uhat):
        res = list(range(self.Lam))
        nl = self._pair_sum(uhat, res, res)
        return self._adv[:, None] * nl + self._visc[:, None] * uhat

    def plql(self, t, uhat):
        """PLQL u_0 on resolved rows: twice the cross term with PL u_pl, l >= Lambda."""
        return self.markovian_and_plql(t, uhat)[1]

    def markovian_and_plql(self, t, uhat):
        """(PL u_0, PLQL u_0) on the resolved rows, sharing the Markovian convolutions."""
        res = list(range(self.Lam))
        unres = list(range(self.Lam, self.M))
        pl = self.markovian_full(uhat)
        cross = self._cross_sum(pl, unres, uhat, res, res)
        return pl[:, : self.Lam], 2.0 * self._adv[:, None] * cross

    def pe_ql(self, t, u):
        """P e^{tL} QL u_0 from a full state reached from zero unresolved data."""
        res = list(range(self.Lam))
        unres = list(range(self.Lam, self.M))
        cross = self._cross_sum(u, unres, u, res, res)
        uu = self._pair_sum(u, unres, res)
        return self._adv[:, None] * (2.0 * cross + uu)

    def jvp(self, t, u, v):
        rows = list(range(self.M))
        out = np.zeros((self.N, self.M), dtype=complex)
        for m in rows:
            for r in rows:
                coef = self.c[:, m, r]
                if coef.any():
                    out[:, r] += 2.0 * self.conv(v @ coef, u[:, m])
        return self._adv[:, None] * out + self._visc[:, None] * v


def build_burgers(cfg: ProblemConfig) -> Burgers:
    cfg.validate()
    return Burgers(cfg.N, cfg.M, cfg.nu, cfg.Lam, cfg.alpha0, cfg.alpha1)


def build_system(cfg: ProblemConfig) -> GalerkinSystem:
    cfg.validate()
    if cfg.problem == "linear-ode":
        return LinearODE(cfg.M, cfg.u_init, cfg.Lam)
    if cfg.problem == "particle":
        return Particle(cfg.M, cfg.u_init, cfg.forcing_phase, cfg.Lam)
    return build_burgers(cfg)
