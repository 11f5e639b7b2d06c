"""Command-line runner.

    mzuq <tensors|run|estimate|compare> --config PATH [--out DIR] [--model NAME] [--cache PATH]

Exit codes: 0 success, 1 configuration or input errors, 2 numerical
divergence or inconsistency, 3 memory-length estimation failure.
"""
from __future__ import annotations

import argparse
import logging
import re
import sys
from pathlib import Path

import numpy as np

from . import report
from .config import MODELS, RunConfig, load_config
from .errors import AlignmentError, ConfigError, MZError
from .experiments import run_estimate, run_model, store_estimate
from .plotting import error_plot, overlay_plot
from .polybasis import C_RATIO, E_NORMALIZED, ORTHONORMAL, STANDARD, LegendreFamily, quad_tensor, triple_tensor
from .stats import relative_error, stat_series

log = logging.getLogger("mzuq")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mzuq", description="Mori-Zwanzig reduced models for chaos-Galerkin systems")
    p.add_argument("command", choices=["tensors", "run", "estimate", "compare"])
    p.add_argument("run_dirs", nargs="*", help="run directories to compare (first is the reference)")
    p.add_argument("--config", help="INI config file")
    p.add_argument("--out", help="output directory (overrides [output] out)")
    p.add_argument("--model", choices=MODELS, help="model (overrides [model] model)")
    p.add_argument("--cache", help="kernel/estimate cache directory (overrides [output] cache)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args) -> RunConfig:
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    cfg = load_config(args.config)
    if args.model:
        cfg.model = args.model
    if args.out:
        cfg.out = args.out
    if args.cache:
        cfg.cache = args.cache
    return cfg.validate()


# ---------------------------------------------------------------------------
# Commands


def cmd_tensors(cfg: RunConfig) -> list[Path]:
    pc = cfg.problem
    top = pc.M - 1 if pc.problem == "burgers" else pc.M
    out = Path(cfg.out)
    return [
        report.write_tensor(out / "e_tensor.csv", triple_tensor(LegendreFamily(top, ORTHONORMAL), top, E_NORMALIZED)),
        report.write_tensor(out / "c_tensor.csv", triple_tensor(LegendreFamily(top, STANDARD), top, C_RATIO)),
        report.write_tensor(out / "d_tensor.csv", quad_tensor(LegendreFamily(top, STANDARD), top)),
    ]


def cmd_run(cfg: RunConfig) -> list[Path]:
    res = run_model(cfg, cfg.cache)
    out = Path(cfg.out)
    traj = res.trajectory
    problem = cfg.problem.problem
    files = [report.write_trajectory(out / "trajectory.csv", problem, traj.times, traj.states)]
    if problem == "burgers":
        r_max = min(cfg.r_max, traj.states.shape[-1] - 1)
        files.append(report.write_stats(out / "stats.csv", stat_series(traj.times, traj.states, r_max)))
    if res.diagnostics is not None:
        files.append(report.write_diagnostics(out / "diagnostics.csv", res.diagnostics))
    files.append(report.write_summary(out / "summary.csv", res.info))
    print(f"{res.model}: {len(traj.times)} records to {out} in {res.seconds:.2f} s")
    return files


def cmd_estimate(cfg: RunConfig) -> list[Path]:
    diag, record = run_estimate(cfg)
    out = Path(cfg.out)
    files = [report.write_diagnostics(out / "diagnostics.csv", diag),
             report.write_summary(out / "estimate.csv", record)]
    if cfg.cache:
        files.append(store_estimate(cfg, cfg.cache, record))
    print(f"t0_hat = {record['t0_hat']:.6f} (switch at t = {record['t_min']:.4f})")
    return files


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_")


def _load_run(run_dir: Path, use_stats: bool):
    # Burgers runs are compared on their statistics, scalar runs per coefficient
    if use_stats:
        header, data = report.read_table(run_dir / "stats.csv")
        return data[:, 0], header[1:], data[:, 1:]
    return report.read_trajectory(run_dir / "trajectory.csv")


def cmd_compare(run_dirs, out) -> list[Path]:
    if len(run_dirs) < 2:
        raise ConfigError("compare needs at least two run directories")
    use_stats = all((Path(d) / "stats.csv").exists() for d in run_dirs)
    runs = [_load_run(Path(d), use_stats) for d in run_dirs]
    labels = _labels(run_dirs)
    t_ref, cols_ref, ref = runs[0]
    common = [c for c in cols_ref if all(c in r[1] for r in runs[1:])]
    if not common:
        raise AlignmentError("runs share no columns")
    for lab, (t, _, _) in zip(labels[1:], runs[1:]):
        if t.shape != t_ref.shape or not np.allclose(t, t_ref, rtol=0, atol=1e-9):
            raise AlignmentError(f"time grid of {lab} differs from the reference")

    out = Path(out)
    header, columns, files = ["t"], [t_ref], []
    for col in common:
        j = cols_ref.index(col)
        errs = {}
        for lab, (t, cols, vals) in zip(labels[1:], runs[1:]):
            errs[lab] = relative_error(t_ref, ref[:, j], t, vals[:, cols.index(col)])
            header.append(f"{lab}:{col}")
            columns.append(errs[lab])
        series = {labels[0]: ref[:, j]}
        series.update({lab: r[2][:, r[1].index(col)] for lab, r in zip(labels[1:], runs[1:])})
        slug = _slug(col)
        files.append(overlay_plot(out / f"overlay_{slug}.svg", t_ref, series, title=col, ylabel=col))
        files.append(error_plot(out / f"error_{slug}.svg", t_ref, errs, title=f"relative error, {col}"))
        files.append(error_plot(out / f"error_{slug}_log.svg", t_ref, errs,
                                title=f"relative error (log scale), {col}", log_scale=True))
    files.insert(0, report.write_table(out / "errors.csv", header, np.column_stack(columns)))
    print(f"compared {len(run_dirs)} runs on {len(common)} columns into {out}")
    return files


def _labels(run_dirs):
    names = [Path(d).resolve().name or str(d) for d in run_dirs]
    if len(set(names)) == len(names):
        return names
    return [f"{i}-{n}" for i, n in enumerate(names)]


# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "compare":
            out = args.out
            if out is None:
                out = load_config(args.config).out if args.config else "compare"
            cmd_compare(args.run_dirs, out)
            return 0
        if args.run_dirs:
            raise ConfigError(f"{args.command} takes no positional arguments")
        cfg = _load(args)
        {"tensors": cmd_tensors, "run": cmd_run, "estimate": cmd_estimate}[args.command](cfg)
        return 0
    except MZError as exc:
        msg = " ".join(str(exc).split())
        print(f"mzuq: {type(exc).__name__}: {msg}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"mzuq: OSError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
