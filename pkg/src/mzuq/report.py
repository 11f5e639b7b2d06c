"""CSV writers and readers for trajectories, statistics, diagnostics and tensors.

Floats are written with ``repr`` so reruns give byte-identical files and a
read-back recovers the stored doubles exactly.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import AlignmentError, ConfigError
from .stats import StatSeries


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_table(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_table(path):
    """Header list and a float array (NaN allowed) from a CSV written here."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing file {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"empty file {path}")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float)
    return rows[0], data.reshape(len(rows) - 1, len(rows[0]))


# ---------------------------------------------------------------------------
# Trajectories


def state_columns(problem: str, shape, N: int | None = None):
    """Column names for one flattened state; Burgers rows are k = -N/2..N/2-1."""
    if problem != "burgers":
        return [f"u{r}" for r in range(shape[-1])]
    n_modes, n_orders = shape
    names = []
    for i in range(n_modes):
        k = i - n_modes // 2
        for r in range(n_orders):
            names += [f"re(k={k};r={r})", f"im(k={k};r={r})"]
    return names


def _flatten(states, problem):
    states = np.asarray(states)
    if problem != "burgers":
        return states.reshape(len(states), -1).real
    flat = states.reshape(len(states), -1)
    out = np.empty((len(states), 2 * flat.shape[1]))
    out[:, 0::2] = flat.real
    out[:, 1::2] = flat.imag
    return out


def write_trajectory(path, problem: str, times, states):
    states = np.asarray(states)
    header = ["t"] + state_columns(problem, states.shape[1:])
    body = _flatten(states, problem)
    return write_table(path, header, (np.concatenate([[t], row]) for t, row in zip(times, body)))


def read_trajectory(path):
    """(times, column names, values) with real/imag columns kept separate."""
    header, data = read_table(path)
    if header[0] != "t":
        raise ConfigError(f"{path}: first column must be t")
    return data[:, 0], header[1:], data[:, 1:]


def burgers_states(columns, values, n_modes: int):
    """Rebuild complex (n_t, n_modes, n_orders) Burgers states from CSV columns."""
    n_orders = len(columns) // (2 * n_modes)
    if 2 * n_modes * n_orders != len(columns):
        raise AlignmentError("column count does not match the number of Fourier modes")
    z = values[:, 0::2] + 1j * values[:, 1::2]
    return z.reshape(len(values), n_modes, n_orders)


STAT_COLUMNS = ["t", "mean_energy", "std_energy", "mean_gradient", "std_gradient"]


def write_stats(path, series: StatSeries):
    return write_table(path, STAT_COLUMNS, series.rows())


DIAG_COLUMNS = ["t", "y_hat", "t0_hat", "epsilon", "newton_iters"]


def write_diagnostics(path, diag: dict):
    cols = [diag[c] for c in DIAG_COLUMNS]
    rows = ([t, y, t0, e, int(n)] for t, y, t0, e, n in zip(*cols))
    return write_table(path, DIAG_COLUMNS, rows)


def write_summary(path, info: dict):
    return write_table(path, ["key", "value"], ([k, v] for k, v in sorted(info.items())))


def write_tensor(path, T: np.ndarray):
    """One row per nonzero entry: index columns then value."""
    idx_names = ["i", "j", "k", "l"][: T.ndim]
    nz = np.nonzero(T)
    rows = (list(ix) + [T[ix]] for ix in zip(*nz))
    return write_table(path, idx_names + ["value"], rows)
