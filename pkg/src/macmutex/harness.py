"""Experiment configuration, batch Monte Carlo runs and report generation."""

from __future__ import annotations

import csv
import io
import json
import math
import random
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
from scipy import stats

from .adversary import ARRIVAL_PATTERNS, AdversaryStrategy, arrival_strategy, starvation_strategy
from .channel import Capabilities
from .protocol import ConfigError, Protocol, parse_epsilon, process_seed
from .protocols import make_protocol
from .simulator import (
    DEFAULT_HORIZON,
    UNFULFILLED,
    ExecutionTrace,
    exclusion_report,
    lockout_report,
    makespan,
    run,
)

__all__ = [
    "ExperimentConfig",
    "TrialResult",
    "ScenarioStats",
    "StatsReport",
    "build_protocol",
    "time_scale",
    "strategy_for_trial",
    "run_trial",
    "run_trials",
    "summarize",
    "run_experiment",
    "wilson_interval",
    "bootstrap_interval",
    "load_config",
]

SUITE = "suite"


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    ``strategy`` is either an inline strategy document, a path to one, the
    name of an arrival pattern, ``"starvation"``, or ``None`` for a static
    start of every process.  ``n`` and ``pattern`` may be lists for a grid.
    """

    protocol: str = "cis-willard"
    n: int | list[int] | None = None
    epsilon: Optional[str] = "1/16"
    cd: bool = False
    gc: bool = False
    kn: bool = True
    fairness: bool = False
    params: dict = field(default_factory=dict)
    strategy: Any = None
    pattern: str | list[str] | None = None
    critical: int = 1
    cycles: Optional[int] = None
    trials: int = 1
    seed: int = 0
    horizon: int = DEFAULT_HORIZON
    workers: int = 1
    trace: Optional[str] = None
    report_json: Optional[str] = None
    report_csv: Optional[str] = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.critical < 1:
            raise ConfigError("critical length must be >= 1")
        if self.epsilon is not None:
            self.epsilon = str(parse_epsilon(self.epsilon))
        for n in self.n_values():
            if n < 1:
                raise ConfigError(f"process count must be >= 1, got {n}")
        for pat in self.patterns():
            if pat is not None and pat not in ARRIVAL_PATTERNS and pat != "starvation":
                raise ConfigError(f"unknown pattern {pat!r}")
        if ("starvation" in self.patterns() and self.cycles is None
                and self.horizon == DEFAULT_HORIZON):
            raise ConfigError("the starvation pattern cycles forever: set horizon or cycles")
        if self.cycles is not None and self.cycles < 1:
            raise ConfigError("cycles must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = sorted(set(doc) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {', '.join(extra)}")
        return cls(**doc)

    def n_values(self) -> list[int]:
        if self.n is None:
            return []
        return list(self.n) if isinstance(self.n, (list, tuple)) else [self.n]

    def patterns(self) -> list[Optional[str]]:
        if self.pattern is None:
            return [None]
        pats = list(self.pattern) if isinstance(self.pattern, (list, tuple)) else [self.pattern]
        out: list[Optional[str]] = []
        for p in pats:
            out.extend(ARRIVAL_PATTERNS if p == SUITE else [p])
        return out

    def caps(self, n: int) -> Capabilities:
        return Capabilities(n=n, cd=self.cd, gc=self.gc, kn=self.kn)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path: str | Path) -> dict:
    """Read a JSON config, reporting syntax errors with their line and column."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def build_protocol(cfg: ExperimentConfig, n: int) -> Protocol:
    caps = cfg.caps(n)
    params = dict(cfg.params)
    if cfg.epsilon is not None:
        params.setdefault("epsilon", cfg.epsilon)
    return make_protocol(cfg.protocol, caps, fairness=cfg.fairness, **params)


def time_scale(proto: Protocol) -> int:
    """Characteristic length used to place arrivals (listening prefix, check length, ...)."""
    inner = getattr(proto, "base", proto)
    inner = getattr(inner, "static", inner)
    conf = getattr(inner, "config", None)
    if conf is not None and hasattr(conf, "k"):
        return conf.k
    if conf is not None and hasattr(conf, "rounds"):
        return 2 * conf.rounds
    return 16


def strategy_for_trial(cfg: ExperimentConfig, n: int, pattern: Optional[str], proto: Protocol,
                       trial: int) -> AdversaryStrategy:
    if proto.static_only and pattern not in (None, "simultaneous"):
        raise ConfigError(f"{proto.name} assumes simultaneous starts; "
                          f"use {proto.name}-dyn for the {pattern!r} pattern")
    if pattern == "starvation":
        return starvation_strategy(n, cycles=cfg.cycles, critical=max(cfg.critical, 1))
    if pattern is not None:
        rng = random.Random(process_seed(cfg.seed, trial))
        return arrival_strategy(pattern, n, time_scale(proto), rng)
    if cfg.strategy is None:
        return AdversaryStrategy.static(n, critical=cfg.critical)
    doc = cfg.strategy
    if isinstance(doc, str):
        doc = json.loads(Path(doc).read_text())
    return AdversaryStrategy.from_json(doc)


@dataclass(frozen=True)
class TrialResult:
    trial: int
    rounds: int
    truncated: bool
    admissible: bool
    max_gap: int
    visits: int
    violated: int
    entries: int
    unfulfilled: int


def summarize_trace(trace: ExecutionTrace, trial: int) -> TrialResult:
    ms = makespan(trace)
    # a gap cut off by the horizon has no known length
    closed = ms.gaps[:-1] if ms.open_gap else ms.gaps
    max_gap = max((b - a + 1 for a, b in closed), default=0)
    ex = exclusion_report(trace)
    lock = lockout_report(trace)
    entries = sum(len(v) for v in lock.values())
    unf = sum(1 for v in lock.values() for _, c in v if c is UNFULFILLED)
    return TrialResult(trial, trace.rounds, trace.truncated, ms.admissible, max_gap,
                       ex.total, ex.violated, entries, unf)


def run_trial(cfg: ExperimentConfig, n: int, pattern: Optional[str], trial: int,
              proto: Optional[Protocol] = None) -> tuple[TrialResult, ExecutionTrace]:
    proto = proto or build_protocol(cfg, n)
    strat = strategy_for_trial(cfg, n, pattern, proto, trial)
    trace = run(proto, strat, cfg.caps(n), seed=cfg.seed, horizon=cfg.horizon, trial=trial)
    return summarize_trace(trace, trial), trace


def _chunk(args: tuple) -> list[TrialResult]:
    cfg_doc, n, pattern, trials = args
    cfg = ExperimentConfig.from_dict(cfg_doc)
    proto = build_protocol(cfg, n)
    return [run_trial(cfg, n, pattern, t, proto)[0] for t in trials]


def run_trials(cfg: ExperimentConfig, n: int, pattern: Optional[str]) -> list[TrialResult]:
    """All trials of one scenario, in trial order whatever the worker count."""
    ids = list(range(cfg.trials))
    if cfg.workers <= 1 or cfg.trials < 2:
        return _chunk((cfg.to_dict(), n, pattern, ids))
    from concurrent.futures import ProcessPoolExecutor

    size = math.ceil(len(ids) / (4 * cfg.workers))
    jobs = [(cfg.to_dict(), n, pattern, ids[i:i + size]) for i in range(0, len(ids), size)]
    out: list[TrialResult] = []
    with ProcessPoolExecutor(cfg.workers) as pool:
        for part in pool.map(_chunk, jobs):
            out.extend(part)
    return out


def wilson_interval(successes: int, total: int, level: float = 0.95) -> tuple[float, float]:
    if total == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(successes, total).proportion_ci(confidence_level=level, method="wilson")
    return (float(ci.low), float(ci.high))


def bootstrap_interval(values: Sequence[float], statistic, seed: int, resamples: int = 1000,
                       level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval; degenerate samples give a point interval."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return (math.nan, math.nan)
    point = float(statistic(arr))
    if arr.size == 1 or np.all(arr == arr[0]):
        return (point, point)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(resamples, arr.size))
    boot = statistic(arr[idx], axis=1)
    alpha = (1 - level) / 2
    lo, hi = np.quantile(boot, [alpha, 1 - alpha])
    # keep the point estimate inside the reported interval
    return (min(float(lo), point), max(float(hi), point))


@dataclass
class ScenarioStats:
    protocol: str
    n: int
    pattern: str
    trials: int
    truncated: int
    admissible: int
    visits: int
    violated_visits: int
    violation_rate: float
    violation_ci_low: float
    violation_ci_high: float
    makespan_mean: float
    makespan_mean_ci_low: float
    makespan_mean_ci_high: float
    makespan_median: float
    makespan_median_ci_low: float
    makespan_median_ci_high: float
    makespan_max: float
    makespan_max_ci_low: float
    makespan_max_ci_high: float
    entries: int
    unfulfilled: int


def summarize(protocol: str, n: int, pattern: Optional[str], results: Sequence[TrialResult],
              seed: int) -> ScenarioStats:
    """Aggregate trials; non-admissible runs count for exclusion but not makespan."""
    visits = sum(r.visits for r in results)
    bad = sum(r.violated for r in results)
    rate = bad / visits if visits else 0.0
    lo, hi = wilson_interval(bad, visits)
    gaps = [r.max_gap for r in results if r.admissible]
    boot_seed = process_seed(seed, n, len(results))
    if gaps:
        mean = float(np.mean(gaps))
        med = float(np.median(gaps))
        mx = float(np.max(gaps))
        mean_ci = bootstrap_interval(gaps, np.mean, boot_seed)
        med_ci = bootstrap_interval(gaps, np.median, boot_seed + 1)
        max_ci = bootstrap_interval(gaps, np.max, boot_seed + 2)
    else:
        mean = med = mx = math.nan
        mean_ci = med_ci = max_ci = (math.nan, math.nan)
    return ScenarioStats(
        protocol=protocol, n=n, pattern=pattern or "static", trials=len(results),
        truncated=sum(r.truncated for r in results),
        admissible=sum(r.admissible for r in results),
        visits=visits, violated_visits=bad, violation_rate=rate,
        violation_ci_low=lo, violation_ci_high=hi,
        makespan_mean=mean, makespan_mean_ci_low=mean_ci[0], makespan_mean_ci_high=mean_ci[1],
        makespan_median=med, makespan_median_ci_low=med_ci[0], makespan_median_ci_high=med_ci[1],
        makespan_max=mx, makespan_max_ci_low=max_ci[0], makespan_max_ci_high=max_ci[1],
        entries=sum(r.entries for r in results),
        unfulfilled=sum(r.unfulfilled for r in results),
    )


@dataclass
class StatsReport:
    config: dict
    rows: list[ScenarioStats]

    def to_json(self) -> str:
        doc = {"config": self.config, "rows": [asdict(r) for r in self.rows]}
        return json.dumps(doc, indent=2, allow_nan=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in fields(ScenarioStats)]
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in asdict(r).items()})
        return buf.getvalue()

    def write(self, json_path: Optional[str], csv_path: Optional[str]) -> None:
        if json_path:
            Path(json_path).write_text(self.to_json())
        if csv_path:
            Path(csv_path).write_text(self.to_csv())


def run_experiment(cfg: ExperimentConfig) -> StatsReport:
    ns = cfg.n_values()
    if not ns:
        raise ConfigError("process count missing: pass --n")
    rows = []
    for n in ns:
        for pattern in cfg.patterns():
            results = run_trials(cfg, n, pattern)
            rows.append(summarize(cfg.protocol + ("+fair" if cfg.fairness else ""), n, pattern,
                                  results, cfg.seed))
    return StatsReport(cfg.to_dict(), rows)
