"""Benchmark runs: classic vs multi-level fast marching on configured problems."""
from __future__ import annotations

import configparser
import csv
import io
import itertools
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .eikonal import BudgetExceeded
from .estimators import MultiLevelFastMarching
from .mlfm import DEFAULT_BETA, DEFAULT_ETA_CONST, DEFAULT_RETRIES, LevelRecord
from .problems import PROBLEMS, make_problem

logger = logging.getLogger(__name__)

RUN_MODES = ("classic", "two_level", "multi_level")
CSV_COLUMNS = ("dim", "mode", "h", "levels", "eta_const", "gamma", "beta", "visited_nodes",
               "wall_ms", "v_star", "tau_star", "err", "status")


@dataclass(frozen=True)
class RunConfig:
    problem: str = "paper_benchmark"
    dim: int = 2
    mode: str = "classic"
    epsilon: float | None = None
    h: float | None = None
    gamma: float = 1.0
    beta: float = DEFAULT_BETA
    eta_const: float = DEFAULT_ETA_CONST
    levels: int | None = None
    repetitions: int = 1
    budget_secs: float | None = None
    max_retries: int = DEFAULT_RETRIES
    out: str | None = None

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; choose from {sorted(PROBLEMS)}")
        if self.mode not in RUN_MODES:
            raise ValueError(f"mode must be one of {RUN_MODES}, got {self.mode!r}")
        if (self.epsilon is None) == (self.h is None):
            raise ValueError("give exactly one of epsilon and h")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.levels is not None and self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        return self

    def estimator(self) -> MultiLevelFastMarching:
        if self.mode == "classic":
            mode, n_levels = "classic", None
        elif self.mode == "two_level":
            mode, n_levels = "two_level", None
        else:
            mode, n_levels = ("n_level", self.levels) if self.levels else ("auto", None)
        return MultiLevelFastMarching(epsilon=self.epsilon, finest_h=self.h, gamma=self.gamma,
                                      beta=self.beta, eta_const=self.eta_const, mode=mode,
                                      n_levels=n_levels, max_retries=self.max_retries)


@dataclass
class RunReport:
    config: dict
    mode: str
    status: str
    levels: list[dict] = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    v_star: float | None = None
    tau_star: float | None = None
    oracle_tau_star: float | None = None
    error_vs_oracle: float | None = None
    timing_samples_ms: list[float] = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> dict:
        cfg = self.config
        return {
            "dim": cfg["dim"],
            "mode": cfg["mode"],
            "h": _fmt(self.schedule.get("steps", [None])[-1] if self.schedule else cfg.get("h")),
            "levels": len(self.schedule.get("steps", [])) if self.schedule else "",
            "eta_const": _fmt(cfg["eta_const"]),
            "gamma": _fmt(cfg["gamma"]),
            "beta": _fmt(cfg["beta"]),
            "visited_nodes": self.totals.get("visited_nodes", ""),
            "wall_ms": _fmt(self.totals.get("wall_ms")),
            "v_star": _fmt(self.v_star),
            "tau_star": _fmt(self.tau_star),
            "err": _fmt(self.error_vs_oracle),
            "status": self.status,
        }


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.10g}"
    return str(x)


def _totals(records: Sequence[LevelRecord]) -> dict:
    return {"visited_nodes": sum(r.visited for r in records),
            "grid_nodes": sum(r.grid_nodes for r in records),
            "wall_ms": sum(r.wall_ms for r in records)}


def run(config: RunConfig) -> RunReport:
    """Solve one configured problem ``repetitions`` times and report the median-time run."""
    config.validate()
    problem = make_problem(config.problem, config.dim)
    est = config.estimator()
    schedule = est.build_schedule(problem)
    sched = {"steps": list(schedule.steps), "etas": list(schedule.etas),
             "raw_steps": list(schedule.raw_steps), "degenerate": schedule.degenerate}
    report = RunReport(asdict(config), config.mode, "ok", schedule=sched)
    if problem.oracle is not None:
        report.oracle_tau_star = problem.oracle.tau_star
    deadline = None if config.budget_secs is None else time.perf_counter() + config.budget_secs

    results = []
    for _ in range(config.repetitions):
        try:
            est.fit(problem, deadline=deadline)
        except BudgetExceeded as exc:
            records = getattr(exc, "records", [])
            report.status = "budget_exceeded"
            report.message = str(exc)
            report.levels = [asdict(r) for r in records]
            report.totals = _totals(records)
            return report
        results.append(est.result_)

    walls = [r.wall_ms for r in results]
    report.timing_samples_ms = walls
    # Median run; lower median for an even count so totals stay a real run's sum.
    order = sorted(range(len(walls)), key=lambda i: walls[i])
    best = results[order[(len(order) - 1) // 2]]
    report.levels = [asdict(r) for r in best.per_level]
    report.totals = _totals(best.per_level)
    report.totals["wall_ms_median"] = statistics.median(walls)
    report.v_star = best.v_star
    report.tau_star = best.tau_star
    if problem.oracle is not None:
        report.error_vs_oracle = abs(best.tau_star - problem.oracle.tau_star)
    return report


def _run_row(config: RunConfig) -> tuple[dict, RunReport | None]:
    try:
        rep = run(config)
        return rep.csv_row(), rep
    except Exception as exc:  # one bad row must not stop the sweep
        logger.error("run failed for %s: %s", config, exc)
        row = {c: "" for c in CSV_COLUMNS}
        row.update(dim=config.dim, mode=config.mode, h=_fmt(config.h), eta_const=_fmt(config.eta_const),
                   gamma=_fmt(config.gamma), beta=_fmt(config.beta), status="error")
        return row, None


def sweep(configs: Sequence[RunConfig], jobs: int = 1) -> list[dict]:
    """One CSV row per config, in input order. Failed runs give a row with status ``error``."""
    if not configs:
        raise ValueError("sweep needs at least one config")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(_run_row, configs))
    else:
        out = [_run_row(c) for c in configs]
    return [row for row, _ in out]


def rows_to_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def fit_loglog_slope(h: Sequence[float], counts: Sequence[float]) -> float:
    """Least-squares slope of ``log(counts)`` against ``log(1/h)``."""
    x = np.log(1.0 / np.asarray(h, dtype=float))
    y = np.log(np.asarray(counts, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


# --------------------------------------------------------------------------
# Config files

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_value(key: str, raw: str):
    raw = raw.strip()
    if key not in _FIELD_TYPES:
        raise ValueError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    if raw.lower() in ("", "none"):
        if "None" in kind:
            return None
        if kind == "str":
            return raw
        raise ValueError(f"{key} may not be empty")
    if kind.startswith("int"):
        return int(raw)
    if kind.startswith("float"):
        # Fractions such as 1/50 are accepted for mesh steps.
        return float(Fraction(raw))
    return raw


def load_config(path: str | Path | None) -> tuple[dict, dict[str, list]]:
    """Read ``[run]`` settings and ``[sweep]`` comma-separated value lists."""
    base: dict = {}
    grid: dict[str, list] = {}
    if path is None:
        return base, grid
    cp = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    extra = set(cp.sections()) - {"run", "sweep"}
    if extra:
        raise ValueError(f"unknown config sections: {sorted(extra)}")
    if cp.has_section("run"):
        for k, v in cp.items("run"):
            base[k] = parse_value(k, v)
    if cp.has_section("sweep"):
        for k, v in cp.items("sweep"):
            grid[k] = [parse_value(k, part) for part in v.split(",")]
    return base, grid


def expand(base: dict, grid: dict[str, list]) -> list[RunConfig]:
    """Cartesian product of the sweep lists on top of the base settings."""
    keys = list(grid)
    out = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        settings = dict(base)
        settings.update(zip(keys, combo))
        # a swept h replaces a base epsilon and vice versa
        if "h" in keys and "epsilon" not in keys:
            settings["epsilon"] = None
        if "epsilon" in keys and "h" not in keys:
            settings["h"] = None
        out.append(RunConfig(**settings))
    return out or [RunConfig(**base)]


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if "h" in overrides:
        overrides.setdefault("epsilon", None)
    if "epsilon" in overrides and "h" not in overrides:
        overrides["h"] = None
    return replace(cfg, **overrides)

