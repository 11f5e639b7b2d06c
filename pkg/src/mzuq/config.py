"""Run configuration: INI-style ``key = value`` text with bracketed sections.

Unknown sections or keys are rejected before any computation starts.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .galerkin import PROBLEMS, ProblemConfig

MODELS = ("full", "markovian", "volterra-memory", "reformulated-memory", "adaptive")


@dataclass
class ProjectionConfig:
    p: int | None = None
    variances: tuple | None = None
    level: int = 3


@dataclass
class EstimatorConfig:
    newton_tol: float = 1e-14
    max_iter: int = 50
    window: int = 50


@dataclass
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    model: str = "full"
    t0: float | None = None
    n0: int = 1
    w_init: str = "history"
    record_every: int | None = None
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    out: str = "mzuq-out"
    cache: str | None = None
    r_max: int = 1

    @property
    def basis_order(self) -> int:
        if self.projection.p is not None:
            return self.projection.p
        return 3 if self.problem.problem == "particle" else 5

    @property
    def record_stride(self) -> int:
        if self.record_every is not None:
            return self.record_every
        return 10 if self.problem.problem == "burgers" else 1

    def validate(self) -> "RunConfig":
        self.problem.validate()
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.model == "volterra-memory" and self.problem.problem == "burgers":
            raise ConfigError("finite-rank memory is not available for Burgers; use reformulated-memory")
        if self.model in ("reformulated-memory", "adaptive") and self.problem.problem != "burgers":
            raise ConfigError(f"model {self.model!r} needs the Burgers problem")
        if self.t0 is not None and self.t0 <= 0:
            raise ConfigError("t0 must be positive")
        if self.n0 < 1:
            raise ConfigError("n0 must be >= 1")
        if self.w_init not in ("history", "zero"):
            raise ConfigError("w_init must be 'history' or 'zero'")
        if self.record_every is not None and self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.projection.level < 1 or self.basis_order < 0:
            raise ConfigError("projection level must be >= 1 and p >= 0")
        if self.estimator.window < 1 or self.estimator.max_iter < 1:
            raise ConfigError("estimator window and max_iter must be >= 1")
        if not 0 <= self.r_max < self.problem.M:
            raise ConfigError("r_max must lie in [0, M)")
        return self


_PROBLEM_KEYS = {
    "problem": str, "m": int, "lambda": int, "u_init": float, "forcing_phase": float,
    "nu": float, "n": int, "alpha0": float, "alpha1": float, "dt": float, "t": float,
}
_PROBLEM_FIELDS = {"m": "M", "lambda": "Lam", "n": "N", "t": "T"}

_SECTIONS = {
    "problem": _PROBLEM_KEYS,
    "model": {"model": str, "t0": float, "n0": int, "w_init": str, "record_every": int},
    "projection": {"p": int, "variances": str, "level": int},
    "estimator": {"newton_tol": float, "max_iter": int, "window": int},
    "output": {"out": str, "cache": str, "r_max": int},
}


def _convert(section, key, raw, kind):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        allowed = _SECTIONS[section]
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[(section, key)] = _convert(section, key, raw.strip(), allowed[key])

    cfg = RunConfig()
    prob = {}
    for (section, key), val in values.items():
        if section == "problem":
            prob[_PROBLEM_FIELDS.get(key, key)] = val
    problem = ProblemConfig(**prob)
    if "dt" not in prob and problem.problem == "burgers":
        problem.dt = 1e-3
    if "T" not in prob and problem.problem == "burgers":
        problem.T = 3.0
    if problem.problem == "burgers" and "M" not in prob:
        problem.M = 7
    if problem.problem == "burgers" and "Lam" not in prob:
        problem.Lam = 2
    cfg.problem = problem

    get = lambda s, k, default=None: values.get((s, k), default)
    cfg.model = get("model", "model", cfg.model)
    cfg.t0 = get("model", "t0")
    cfg.n0 = get("model", "n0", cfg.n0)
    cfg.w_init = get("model", "w_init", cfg.w_init)
    cfg.record_every = get("model", "record_every")
    variances = get("projection", "variances")
    if variances is not None:
        try:
            variances = tuple(float(v) for v in variances.split(","))
        except ValueError:
            raise ConfigError(f"[projection] variances: cannot parse {variances!r}") from None
    cfg.projection = ProjectionConfig(get("projection", "p"), variances, get("projection", "level", 3))
    cfg.estimator = EstimatorConfig(get("estimator", "newton_tol", 1e-14), get("estimator", "max_iter", 50),
                                    get("estimator", "window", 50))
    cfg.out = get("output", "out", cfg.out)
    cfg.cache = get("output", "cache")
    cfg.r_max = get("output", "r_max", cfg.r_max)
    return cfg.validate()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
