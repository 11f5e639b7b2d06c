"""End-to-end model runs shared by the CLI and the acceptance checks."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .finiterank import (
    cache_key,
    default_measure,
    estimate_kernels,
    kernel_rule,
    load_table,
    run_reduced,
    save_table,
    solve_volterra,
)
from .galerkin import build_system
from .integrate import StepperConfig, Trajectory, integrate
from .markovmz import adaptive_run, estimate_memory_length, run_markovian, run_reformulated_reduced
from .polybasis import hermite_basis

log = logging.getLogger(__name__)


@dataclass
class ModelRun:
    model: str
    trajectory: Trajectory
    info: dict = field(default_factory=dict)
    diagnostics: dict | None = None
    seconds: float = 0.0


def stepper(cfg, record_every: int = 1) -> StepperConfig:
    return StepperConfig(cfg.problem.dt, cfg.problem.T, record_every)


def _subsample(traj: Trajectory, every: int) -> Trajectory:
    if every == 1:
        return traj
    keep = slice(None, None, every)
    return Trajectory(traj.times[keep], traj.states[keep],
                      {k: v[keep] for k, v in traj.auxiliaries.items()})


# ---------------------------------------------------------------------------
# Finite-rank kernels


def projection_setup(system, p: int, variances=None, level: int = 3):
    measure = default_measure(system, variances)
    n_res = system.n_resolved_orders
    basis = hermite_basis(measure.marginal(list(range(n_res))), p)
    rule = kernel_rule(measure, n_res, p, level)
    return measure, basis, rule


def kernel_cache_key(cfg, measure, n_steps: int) -> str:
    pc = cfg.problem
    return cache_key(problem=pc.problem, M=pc.M, Lam=pc.Lam, u_init=pc.u_init, phase=pc.forcing_phase,
                     p=cfg.basis_order, means=[repr(float(m)) for m in measure.means],
                     variances=[repr(float(v)) for v in measure.variances],
                     rule=f"gh-tensor x smolyak level {cfg.projection.level}",
                     dt=repr(pc.dt), n_t=n_steps)


def kernel_table(system, cfg, cache_dir=None, workers=None):
    """Estimate (or reload) the kernel table and its Volterra solution."""
    measure, basis, rule = projection_setup(system, cfg.basis_order, cfg.projection.variances,
                                            cfg.projection.level)
    st = stepper(cfg)
    path = None
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        path = cache_dir / f"kernels-{kernel_cache_key(cfg, measure, st.n_steps)}.csv"
        if path.exists():
            log.info("reusing kernel table %s", path)
            table = load_table(path)
            if table.A is None:
                solve_volterra(table)
            return table, basis
    log.info("estimating kernels on %d nodes, %d basis functions", len(rule), len(basis))
    table = solve_volterra(estimate_kernels(system, measure, basis, rule, st, workers))
    if path is not None:
        save_table(table, path)
    return table, basis


# ---------------------------------------------------------------------------
# Memory-length estimates


def estimate_cache_key(cfg) -> str:
    pc = cfg.problem
    return cache_key(problem=pc.problem, N=pc.N, M=pc.M, Lam=pc.Lam, nu=repr(pc.nu),
                     alpha=[repr(pc.alpha0), repr(pc.alpha1)], dt=repr(pc.dt),
                     window=cfg.estimator.window, tol=repr(cfg.estimator.newton_tol))


def store_estimate(cfg, cache_dir, record: dict) -> Path:
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"estimate-{estimate_cache_key(cfg)}.json"
    path.write_text(json.dumps(record, sort_keys=True, indent=1) + "\n")
    return path


def cached_t0(cfg, cache_dir) -> float:
    if cfg.t0 is not None:
        return cfg.t0
    if cache_dir is None:
        raise ConfigError("reformulated-memory needs t0 in [model] or a cache holding an estimate")
    path = Path(cache_dir) / f"estimate-{estimate_cache_key(cfg)}.json"
    if not path.exists():
        raise ConfigError(f"no cached memory-length estimate at {path}; run 'mzuq estimate' first")
    return float(json.loads(path.read_text())["t0_hat"])


def run_estimate(cfg):
    system = build_system(cfg.problem)
    est = cfg.estimator
    _, diag, sw = estimate_memory_length(system, stepper(cfg), est.window, est.newton_tol, est.max_iter)
    return diag, {"t0_hat": sw["t0_hat"], "t_min": sw["t"], "y_hat": sw["y"], "switch_step": sw["step"]}


# ---------------------------------------------------------------------------
# Model dispatch


def run_model(cfg, cache_dir=None, workers=None) -> ModelRun:
    system = build_system(cfg.problem)
    every = cfg.record_stride
    st = stepper(cfg, every)
    u0 = system.initial_state()
    model = cfg.model
    info = {"problem": cfg.problem.problem, "model": model}
    tic = time.perf_counter()
    diag = None
    if model == "full":
        traj = integrate(system.rhs, u0, st)
    elif model == "markovian":
        traj = run_markovian(system, system.resolved(u0), st)
    elif model == "volterra-memory":
        table, basis = kernel_table(system, cfg, cache_dir, workers)
        traj = _subsample(run_reduced(system, system.resolved(u0), stepper(cfg), table, basis), every)
    elif model == "reformulated-memory":
        t0_len = cached_t0(cfg, cache_dir)
        info["t0"] = t0_len
        traj = run_reformulated_reduced(system, system.resolved(u0), t0_len, st, n0=cfg.n0)
    else:
        est = cfg.estimator
        res = adaptive_run(system, stepper(cfg), est.window, cfg.n0, cfg.w_init, est.newton_tol, est.max_iter)
        traj = _subsample(res.trajectory, every)
        diag = res.diagnostics
        info.update(t0_hat=res.t0_hat, t_min=res.t_min)
    return ModelRun(model, traj, info, diag, time.perf_counter() - tic)


# ---------------------------------------------------------------------------
# Burgers comparison after the switch


def burgers_switch_comparison(cfg):
    """Full, Markovian and memory runs restarted from the state at t_min.

    Returns the three trajectories over [t_min, T] and their wall times.
    """
    system = build_system(cfg.problem)
    est = cfg.estimator
    res = adaptive_run(system, stepper(cfg), est.window, cfg.n0, cfg.w_init, est.newton_tol, est.max_iter)
    dt = cfg.problem.dt
    n_rem = len(res.trajectory.times) - 1 - round(res.t_min / dt)
    tail = StepperConfig(dt, n_rem * dt)
    tic = time.perf_counter()
    full = integrate(system.rhs, res.full_state_at_switch, tail, t0=res.t_min)
    t_full = time.perf_counter() - tic
    tic = time.perf_counter()
    markov = run_markovian(system, system.resolved(res.full_state_at_switch), tail, t_start=res.t_min)
    t_markov = time.perf_counter() - tic
    memory = Trajectory(res.trajectory.times[-n_rem - 1:], res.trajectory.states[-n_rem - 1:])
    return {"full": full, "markovian": markov, "memory": memory, "t0_hat": res.t0_hat,
            "t_min": res.t_min, "diagnostics": res.diagnostics,
            "seconds": {"full": t_full, "markovian": t_markov, "memory": res.timings["reduced"]}}
