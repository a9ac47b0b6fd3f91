"""Strict JSON run configuration.

A config names an algorithm, a problem (a kind string or a full spec
object), a schedule, a seed, and output settings. Missing fields take
per-problem defaults; unknown keys are rejected by name. ``to_dict`` emits
the fully resolved form, which loads back to an equal config.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, InvalidSpec
from .orchestrator import ALL_ALGORITHMS, run_algorithm
from .rng import RngStream
from .schedule import ScheduleConfig
from .zoo import SPEC_TYPES, make_problem, spec_from_dict

# per-problem schedule defaults; the minimax values are the settings the
# linear-convergence regression fixture was recorded with
SCHEDULE_DEFAULTS = {
    "minimax-quadratic": dict(K=200, T=5, N=5, tau_inner=2, tau_outer=2, alpha=0.05, beta=0.1),
    "bilevel-quadratic": dict(K=200, T=5, N=10, tau_inner=2, tau_outer=2, alpha=0.1, beta=0.1),
    "compositional": dict(K=200, T=1, N=1, tau_inner=2, tau_outer=2, alpha=0.1, beta=0.5),
    "single-level": dict(K=100, T=1, N=1, tau_inner=1, tau_outer=4, alpha=0.5, beta=0.1),
}

PRESETS = {
    "paper-h": {
        "problem": {"m": 100},
        "problem_if": {"lam": 10.0},
        "schedule": dict(N=5, T=1, tau_outer=1, tau_inner=5, participation=10),
    },
}

TOP_KEYS = ("algorithm", "problem", "schedule", "seed", "init", "output", "metric_stride", "preset")
INIT_KEYS = ("kind", "scale")
OUTPUT_KEYS = ("dir", "csv", "json")


@dataclass(frozen=True)
class InitConfig:
    """Starting point: all zeros, or Gaussian with the given scale."""

    kind: str = "random"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("zeros", "random"):
            raise ConfigError("init.kind must be 'zeros' or 'random'")
        if not self.scale >= 0:
            raise ConfigError("init.scale must be >= 0")

    def point(self, d1, d2, seed):
        if self.kind == "zeros":
            return np.zeros(d1), np.zeros(d2)
        s = RngStream(seed, ("init",))
        return self.scale * s.child("x").normal(d1), self.scale * s.child("y").normal(d2)


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "."
    csv: str = "trace.csv"
    json: str = "summary.json"


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration of one run."""

    algorithm: str
    problem: object
    schedule: ScheduleConfig
    seed: int = 0
    init: InitConfig = field(default_factory=InitConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    metric_stride: int = 1
    preset: str = None

    def __post_init__(self):
        if self.algorithm not in ALL_ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALL_ALGORITHMS}, got {self.algorithm!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an integer in [0, 2^64)")
        if int(self.metric_stride) != self.metric_stride or self.metric_stride < 1:
            raise ConfigError("metric_stride must be an integer >= 1")

    def to_dict(self):
        return {
            "algorithm": self.algorithm,
            "problem": self.problem.to_dict(),
            "schedule": self.schedule.to_dict(),
            "seed": int(self.seed),
            "init": dataclasses.asdict(self.init),
            "output": dataclasses.asdict(self.output),
            "metric_stride": int(self.metric_stride),
            "preset": self.preset,
        }

    def with_seed(self, seed):
        return dataclasses.replace(self, seed=int(seed))

    def build_problem(self):
        return make_problem(self.problem)


def _reject_unknown(data, allowed, where):
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def _sub(cls, data, allowed, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    _reject_unknown(data, allowed, where)
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data) -> RunConfig:
    """Validate and default a parsed config document."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(data, TOP_KEYS, "config")
    for key in ("algorithm", "problem"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
    problem = data["problem"]
    if isinstance(problem, str):
        problem = {"kind": problem}
    if not isinstance(problem, dict) or problem.get("kind") not in SPEC_TYPES:
        raise ConfigError(f"problem kind must be one of {sorted(SPEC_TYPES)}")
    problem = dict(problem)
    sched = dict(SCHEDULE_DEFAULTS[problem["kind"]])
    preset = data.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; known: {sorted(PRESETS)}")
        p = PRESETS[preset]
        fields = {f.name for f in dataclasses.fields(SPEC_TYPES[problem["kind"]])}
        for k, v in {**p["problem"], **p["problem_if"]}.items():
            if k in fields and k not in problem:
                problem[k] = v
        sched.update(p["schedule"])
    user_sched = data.get("schedule", {})
    if not isinstance(user_sched, dict):
        raise ConfigError("schedule must be an object")
    allowed = [f.name for f in dataclasses.fields(ScheduleConfig)]
    _reject_unknown(user_sched, allowed, "schedule")
    sched.update(user_sched)
    try:
        spec = spec_from_dict(problem)
        schedule = ScheduleConfig(**sched)
    except InvalidSpec as exc:
        raise ConfigError(str(exc)) from None
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(
        algorithm=data["algorithm"], problem=spec, schedule=schedule,
        seed=data.get("seed", 0),
        init=_sub(InitConfig, data.get("init", {}), INIT_KEYS, "init"),
        output=_sub(OutputConfig, data.get("output", {}), OUTPUT_KEYS, "output"),
        metric_stride=data.get("metric_stride", 1), preset=preset)


def loads_config(text, source="<string>") -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)


def load_config(path) -> RunConfig:
    """Read, parse and validate a JSON config file."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return loads_config(text, str(path))


def dumps_config(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True)


def run_config(cfg: RunConfig):
    """Build the problem, run the configured algorithm, return the trace."""
    instance = cfg.build_problem()
    x0, y0 = cfg.init.point(instance.d1, instance.d2, cfg.seed)
    return run_algorithm(cfg.algorithm, instance, cfg.schedule, cfg.seed, x0=x0, y0=y0,
                         metric_stride=cfg.metric_stride, config_echo=cfg.to_dict())
