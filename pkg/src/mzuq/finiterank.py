"""Finite-rank projection memory kernels and the non-Markovian reduced model.

Kernels are ensemble averages over quadrature nodes drawn from a Gaussian
measure on the initial chaos coefficients:

    gamma^{nu mu}(t) = (e^{tL} h^nu, h^mu)
    g^{nu mu}(t)     = (L e^{tL} h^nu, h^mu)
    f^mu_j(t)        = (L e^{tL} F_j(., 0), h^mu),   F_j(., 0) = QL u_0j

The generator is applied analytically along each stored trajectory,
(L phi)(u) = sum_i R_i(u) d phi / d u_i.  The Volterra equation for the
kernel coefficients a^mu_j is then marched with the product trapezoidal rule.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError, ConditioningError, ConfigError, DivergenceError, ExtentError
from .integrate import StepperConfig, Trajectory, heun_step, integrate
from .polybasis import (
    GH_TENSOR,
    SMOLYAK,
    GaussianMeasure,
    HermiteBasisSet,
    QuadratureRule,
    hermite_basis,
    product_rule,
    quadrature,
)

log = logging.getLogger(__name__)

NODE_CHUNK = 128


def worker_count() -> int:
    env = os.environ.get("MZUQ_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MZUQ_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


@dataclass
class KernelTable:
    dt: float
    F: np.ndarray       # (n_t + 1, n_basis, n_resolved)   f^mu_j
    G: np.ndarray       # (n_t + 1, n_basis, n_basis)      g^{nu mu}
    Gamma: np.ndarray   # (n_t + 1, n_basis, n_basis)      gamma^{nu mu}
    A: np.ndarray | None = None  # (n_t + 1, n_basis, n_resolved)   a^mu_j

    @property
    def n_t(self) -> int:
        return len(self.F) - 1

    @property
    def tgrid(self) -> np.ndarray:
        return self.dt * np.arange(self.n_t + 1)

    @property
    def n_basis(self) -> int:
        return self.F.shape[1]

    @property
    def n_resolved(self) -> int:
        return self.F.shape[2]


# ---------------------------------------------------------------------------
# Measures, rules and projections


def default_variances(problem: str, n_coeffs: int) -> list[float]:
    if problem == "particle":
        return [10.0 ** (-2 * i - 2) for i in range(n_coeffs)]
    return [0.01] * n_coeffs


def default_measure(system, variances=None) -> GaussianMeasure:
    """Gaussian measure centred on the system's initial chaos coefficients."""
    u0 = np.asarray(system.initial_state(), dtype=float)
    if variances is None:
        variances = default_variances(system.name, len(u0))
    return GaussianMeasure(u0, variances)


def kernel_rule(measure: GaussianMeasure, n_resolved: int, p: int, level: int = 3) -> QuadratureRule:
    """Gauss-Hermite tensor rule (p+1 points) on the resolved coordinates times
    a Smolyak sparse grid of the given level on the unresolved ones.

    The tensor factor integrates products of two degree-p basis functions
    exactly, so the Gram matrix of the basis is the identity.
    """
    d = measure.dim
    res = list(range(n_resolved))
    parts = [(res, quadrature(GH_TENSOR, n_resolved, p + 1, measure.marginal(res)))]
    if d > n_resolved:
        unres = list(range(n_resolved, d))
        parts.append((unres, quadrature(SMOLYAK, len(unres), level, measure.marginal(unres))))
    return product_rule(parts, d)


def project(values: np.ndarray, basis_values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Coefficients (f, h^nu) from node values of f and of the basis."""
    return basis_values.T @ (weights * values)


# ---------------------------------------------------------------------------
# Kernel estimation


def _chunk_kernels(system, basis: HermiteBasisSet, nodes, weights, cfg: StepperConfig, offset: int):
    n_steps = cfg.n_steps
    dt = cfg.dt
    nb = len(basis)
    nres = system.n_resolved_orders
    Fk = np.zeros((n_steps + 1, nb, nres))
    Gk = np.zeros((n_steps + 1, nb, nb))
    Gam = np.zeros((n_steps + 1, nb, nb))

    u = np.array(nodes, dtype=float)
    W0 = weights[:, None] * basis.evaluate(system.resolved(u))
    for step in range(n_steps + 1):
        t = step * dt
        R = system.rhs(t, u)
        bad = ~np.all(np.isfinite(R), axis=-1) | ~np.all(np.isfinite(u), axis=-1)
        if bad.any():
            node = offset + int(np.flatnonzero(bad)[0])
            raise DivergenceError(f"quadrature node {node} diverged at t={t:.6g}", t=t, step=step, node=node)
        uh = system.resolved(u)
        Rres = system.resolved(R)
        Gam[step] = basis.evaluate(uh).T @ W0
        Lh = np.einsum("nbi,ni->nb", basis.gradient(uh), Rres)
        Gk[step] = Lh.T @ W0
        LF = system.resolved(system.jvp(t, u, R)) - system.resolved(
            system.jvp(t, system.embed(uh), system.embed(Rres)))
        Fk[step] = W0.T @ LF
        if step < n_steps:
            k2 = system.rhs(t + dt, u + dt * R)
            u = u + 0.5 * dt * (R + k2)
    return Fk, Gk, Gam


def estimate_kernels(system, measure: GaussianMeasure, basis: HermiteBasisSet, rule: QuadratureRule,
                     cfg: StepperConfig, workers: int | None = None) -> KernelTable:
    """Ensemble estimate of f, g and gamma on the grid 0, dt, ..., n_t dt.

    Nodes are processed in fixed chunks and reduced in chunk order, so the
    result does not depend on the number of workers.
    """
    n_state = system.state_shape[-1]
    if rule.dim != n_state:
        raise ConfigError(f"rule dimension {rule.dim} != state dimension {n_state}")
    if basis.measure.dim != system.n_resolved_orders:
        raise ConfigError("basis must live on the resolved coordinates")
    starts = list(range(0, len(rule), NODE_CHUNK))
    jobs = [(rule.nodes[s:s + NODE_CHUNK], rule.weights[s:s + NODE_CHUNK], s) for s in starts]
    workers = workers or worker_count()

    def run(job):
        return _chunk_kernels(system, basis, job[0], job[1], cfg, job[2])

    if workers == 1 or len(jobs) == 1:
        parts = [run(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))
    F, G, Gam = (_ordered_sum([p[i] for p in parts]) for i in range(3))
    return KernelTable(cfg.dt, F, G, Gam)


def _ordered_sum(arrays):
    out = arrays[0].copy()
    for a in arrays[1:]:
        out += a
    return out


# ---------------------------------------------------------------------------
# Volterra solve and memory term


def solve_volterra(table: KernelTable) -> KernelTable:
    """March a(t_n) = f(t_n) - int_0^t a(s) g(t_n - s) ds with the trapezoidal rule.

    The diagonal term dt/2 g(0) is taken to the left side, giving one small
    linear solve per time level for all resolved indices at once.
    """
    dt = table.dt
    F, G = table.F, table.G
    n, nb, _ = F.shape
    lhs = np.eye(nb) + 0.5 * dt * G[0].T
    cond = np.linalg.cond(lhs)
    if not np.isfinite(cond) or cond > 1e12:
        raise ConditioningError(f"Volterra left-hand matrix is ill-conditioned (cond={cond:.3g})")
    lu_inv = np.linalg.inv(lhs)
    A = np.zeros_like(F)
    A[0] = F[0]  # empty integral at t = 0
    for i in range(1, n):
        hist = 0.5 * G[i].T @ A[0]
        if i > 1:
            hist = hist + np.einsum("mba,mbj->aj", G[i - 1:0:-1], A[1:i])
        A[i] = lu_inv @ (F[i] - dt * hist)
    table.A = A
    return table


def memory_series(table: KernelTable, h0: np.ndarray, n_max: int | None = None) -> np.ndarray:
    """Trapezoidal int_0^{t_n} A(s) Gamma(t_n - s) h(u_hat_0) ds for n = 0..n_max."""
    if table.A is None:
        raise ConfigError("kernel table has no Volterra solution; call solve_volterra first")
    n_max = table.n_t if n_max is None else n_max
    if n_max > table.n_t:
        raise ExtentError(f"memory requested to step {n_max} but kernels end at step {table.n_t}")
    gh = table.Gamma[: n_max + 1] @ h0          # (n, nb): sum_mu gamma^{nu mu} h^mu
    A = table.A[: n_max + 1]                    # (n, nb, J)
    out = np.zeros((n_max + 1, table.n_resolved))
    for i in range(1, n_max + 1):
        terms = np.einsum("mbj,mb->mj", A[: i + 1], gh[i::-1])
        out[i] = table.dt * (terms.sum(axis=0) - 0.5 * (terms[0] + terms[-1]))
    return out


def memory_term(table: KernelTable, h_at_initial: np.ndarray, t: float) -> np.ndarray:
    i = round(t / table.dt)
    if abs(i * table.dt - t) > 1e-9 * max(1.0, t):
        raise ExtentError(f"t={t} is not on the kernel grid")
    if i > table.n_t:
        raise ExtentError(f"t={t} beyond kernel grid end {table.tgrid[-1]}")
    return memory_series(table, h_at_initial, i)[i]


def run_reduced(system, uhat0, cfg: StepperConfig, table: KernelTable | None = None,
                basis: HermiteBasisSet | None = None, with_memory: bool = True) -> Trajectory:
    """Heun integration of du_hat/dt = R(u_hat, 0) [+ memory(t)].

    The memory forcing uses h frozen at the initial resolved state.
    """
    uhat0 = np.asarray(uhat0, dtype=float)
    mem = None
    if with_memory:
        if table is None or basis is None:
            raise ConfigError("memory run needs a kernel table and basis")
        if abs(table.dt - cfg.dt) > 1e-12 * cfg.dt:
            raise AlignmentError(f"kernel dt {table.dt} != run dt {cfg.dt}")
        if cfg.n_steps > table.n_t:
            raise ExtentError(f"run needs {cfg.n_steps} steps but kernels cover {table.n_t}")
        mem = memory_series(table, basis.evaluate(uhat0), cfg.n_steps)

    def rhs(t, uh):
        out = system.markovian_rhs(t, uh)
        if mem is not None:
            out = out + mem[round(t / cfg.dt)]
        return out

    return integrate(rhs, uhat0, cfg)


# ---------------------------------------------------------------------------
# Persistence


def cache_key(**parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _pair_names(prefix, a, b):
    return [f"{prefix}[{i};{j}]" for i in range(a) for j in range(b)]


def save_table(table: KernelTable, path, basis_labels=None):
    nt1, nb, J = table.F.shape
    blocks = [("tgrid", ["t"], table.tgrid[:, None]),
              ("F", _pair_names("f", nb, J), table.F.reshape(nt1, -1)),
              ("G", _pair_names("g", nb, nb), table.G.reshape(nt1, -1)),
              ("Gamma", _pair_names("gamma", nb, nb), table.Gamma.reshape(nt1, -1))]
    if table.A is not None:
        blocks.append(("A", _pair_names("a", nb, J), table.A.reshape(nt1, -1)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["#meta", "dt", repr(table.dt), "n_basis", nb, "n_resolved", J])
        for name, header, data in blocks:
            w.writerow([f"#block", name])
            w.writerow(header)
            for row in data:
                w.writerow([repr(float(x)) for x in row])


def load_table(path) -> KernelTable:
    blocks = {}
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    meta = rows[0]
    dt, nb, J = float(meta[2]), int(meta[4]), int(meta[6])
    i = 1
    while i < len(rows):
        name = rows[i][1]
        i += 2
        data = []
        while i < len(rows) and rows[i][0] != "#block":
            data.append([float(x) for x in rows[i]])
            i += 1
        blocks[name] = np.array(data)
    nt1 = len(blocks["tgrid"])
    tab = KernelTable(dt, blocks["F"].reshape(nt1, nb, J), blocks["G"].reshape(nt1, nb, nb),
                      blocks["Gamma"].reshape(nt1, nb, nb))
    if "A" in blocks:
        tab.A = blocks["A"].reshape(nt1, nb, J)
    return tab
