"""Seeded benchmark suites: repeated runs, percentile bands, summary tables."""

from __future__ import annotations

import csv
import json
import logging
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .core import SnboConfig
from .optimizer import RunResult, run_random_search, run_snbo
from .problems import make_problem

log = logging.getLogger(__name__)

METHODS = ("snbo", "random")
HISTORY_HEADER = ["eval_index", "value", "running_best", "restart_flag"]
BANDS_HEADER = ["eval_index", "p25", "p50", "p75"]
SUMMARY_HEADER = ["problem", "method", "best", "median", "worst", "median_time_min"]


@dataclass
class SuiteEntry:
    problem: str
    n_dims: int
    n_max: int
    n_init: Optional[int] = None
    hidden_layers: Optional[Sequence[int]] = None

    @property
    def label(self) -> str:
        return f"{self.problem}_{self.n_dims}d"


@dataclass
class SuiteConfig:
    entries: list
    n_repeats: int = 10
    methods: tuple = METHODS
    base_seed: int = 0
    output_dir: Optional[str] = None
    snbo: dict = field(default_factory=dict)  # extra SnboConfig overrides

    def __post_init__(self):
        self.entries = [e if isinstance(e, SuiteEntry) else SuiteEntry(**e) for e in self.entries]
        self.methods = tuple(self.methods)
        if self.n_repeats < 1:
            raise ValueError(f"n_repeats must be >= 1, got {self.n_repeats}")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}; known: {METHODS}")
        for e in self.entries:
            make_problem(e.problem, e.n_dims)

    @classmethod
    def from_dict(cls, data: dict) -> "SuiteConfig":
        return cls(**data)

    @classmethod
    def load(cls, path) -> "SuiteConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class SummaryRow:
    problem: str
    method: str
    best: float
    median: float
    worst: float
    median_time_min: float


@dataclass
class RunEntry:
    problem: str
    method: str
    repeat: int
    seed: int
    result: Optional[RunResult] = None
    error: Optional[str] = None


@dataclass
class SuiteReport:
    runs: list = field(default_factory=list)
    bands: dict = field(default_factory=dict)  # (problem, method) -> (N, 3) array
    summary: list = field(default_factory=list)

    @property
    def failures(self):
        return [r for r in self.runs if r.error is not None]


def repeat_seed(base_seed: int, repeat: int) -> int:
    return int(np.random.SeedSequence(base_seed, spawn_key=(repeat,)).generate_state(1)[0])


def snbo_config_for(entry: SuiteEntry, seed: int, overrides: dict | None = None) -> SnboConfig:
    kw = dict(overrides or {})
    kw.update(n_dims=entry.n_dims, n_max=entry.n_max, seed=seed)
    if entry.n_init is not None:
        kw["n_init"] = entry.n_init
    if entry.hidden_layers is not None:
        kw["hidden_layers"] = entry.hidden_layers
    return SnboConfig(**kw)


def run_one(entry: SuiteEntry, method: str, seed: int, overrides: dict | None = None) -> RunResult:
    objective = make_problem(entry.problem, entry.n_dims).objective()
    config = snbo_config_for(entry, seed, overrides)
    if method == "snbo":
        return run_snbo(objective, config)
    if method == "random":
        return run_random_search(objective, config.n_max, seed, n_init=config.n_init)
    raise ValueError(f"unknown method {method!r}")


def _job(args):
    entry, method, repeat, seed, overrides = args
    run = RunEntry(entry.label, method, repeat, seed)
    try:
        run.result = run_one(entry, method, seed, overrides)
    except Exception as e:
        run.error = f"{type(e).__name__}: {e}"
        log.error(
            "run failed: problem=%s method=%s repeat=%d\n%s",
            entry.label, method, repeat, traceback.format_exc(),
        )
    return run


def percentile_bands(histories, levels=(25, 50, 75)) -> np.ndarray:
    """Per-evaluation percentiles (linear interpolation) of running-best curves.

    Returns an array of shape ``(n_evals, len(levels))``. Curves of unequal
    length are truncated to the shortest.
    """
    curves = [np.asarray(h, dtype=float) for h in histories]
    if not curves:
        raise ValueError("percentile_bands needs at least one curve")
    lengths = {c.size for c in curves}
    if len(lengths) > 1:
        warnings.warn(f"ragged curves (lengths {sorted(lengths)}); truncating to the shortest")
    m = min(lengths)
    stack = np.stack([c[:m] for c in curves])
    return np.percentile(stack, levels, axis=0).T


def summarize_finals(finals, times) -> tuple:
    finals = np.asarray(finals, dtype=float)
    return (
        float(finals.min()),
        float(np.median(finals)),
        float(finals.max()),
        float(np.median(np.asarray(times, dtype=float))) / 60.0,
    )


def assemble(runs: list) -> SuiteReport:
    report = SuiteReport(runs=runs)
    groups: dict = {}
    for run in runs:
        if run.result is not None:
            groups.setdefault((run.problem, run.method), []).append(run)
    for (problem, method), group in groups.items():
        curves = [g.result.record.running_best for g in group]
        report.bands[(problem, method)] = percentile_bands(curves)
        best, med, worst, t = summarize_finals(
            [g.result.best_y for g in group], [g.result.record.wall_time for g in group]
        )
        report.summary.append(SummaryRow(problem, method, best, med, worst, t))
    return report


def run_suite(config: SuiteConfig, parallel: int = 1) -> SuiteReport:
    jobs = []
    for entry in config.entries:
        for k in range(config.n_repeats):
            seed = repeat_seed(config.base_seed, k)
            for method in config.methods:
                jobs.append((entry, method, k, seed, config.snbo))
    if parallel > 1:
        with ProcessPoolExecutor(parallel, initializer=torch.set_num_threads, initargs=(1,)) as pool:
            runs = list(pool.map(_job, jobs))
    else:
        runs = [_job(j) for j in jobs]
    report = assemble(runs)
    if config.output_dir:
        emit_csv(report, config.output_dir)
    return report


def _f(x: float) -> str:
    return format(float(x), ".17g")


def _history_name(run: RunEntry) -> str:
    return f"{run.problem}__{run.method}__r{run.repeat:03d}.csv"


def _write(path: Path, header, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e


def emit_csv(report: SuiteReport, path) -> Path:
    """Write per-run histories, percentile bands, a summary table and ``runs.json``."""
    out = Path(path)
    (out / "histories").mkdir(parents=True, exist_ok=True)
    (out / "bands").mkdir(exist_ok=True)

    meta = []
    for run in report.runs:
        entry = {"problem": run.problem, "method": run.method, "repeat": run.repeat,
                 "seed": run.seed, "error": run.error}
        if run.result is not None:
            rec = run.result.record
            restarts = set(rec.restarts)
            rows = [
                [i, _f(v), _f(b), int(i in restarts)] for i, v, b in rec.history
            ]
            _write(out / "histories" / _history_name(run), HISTORY_HEADER, rows)
            entry.update(
                history=_history_name(run),
                best_y=run.result.best_y,
                best_x=[float(v) for v in run.result.best_x],
                n_evals=run.result.n_evals_used,
                restarts=list(rec.restarts),
                wall_time=rec.wall_time,
            )
        meta.append(entry)

    for (problem, method), bands in sorted(report.bands.items()):
        rows = [[i + 1, *map(_f, row)] for i, row in enumerate(bands)]
        _write(out / "bands" / f"{problem}__{method}.csv", BANDS_HEADER, rows)

    _write(
        out / "summary.csv",
        SUMMARY_HEADER,
        [[s.problem, s.method, _f(s.best), _f(s.median), _f(s.worst), _f(s.median_time_min)]
         for s in report.summary],
    )
    with open(out / "runs.json", "w") as fh:
        json.dump(meta, fh, indent=1)
    return out


def read_history(path) -> np.ndarray:
    """``(eval_index, value, running_best, restart_flag)`` rows of a history CSV."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != HISTORY_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    return np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, 4)


def summarize_dir(path) -> list:
    """Recompute summary rows from the artifacts of a previous ``run_suite``."""
    root = Path(path)
    with open(root / "runs.json") as fh:
        meta = json.load(fh)
    groups: dict = {}
    for m in meta:
        if m.get("error") is None:
            hist = read_history(root / "histories" / m["history"])
            groups.setdefault((m["problem"], m["method"]), []).append(
                (hist[-1, 2], m.get("wall_time", 0.0))
            )
    rows = []
    for (problem, method), items in groups.items():
        finals, times = zip(*items)
        rows.append(SummaryRow(problem, method, *summarize_finals(finals, times)))
    return rows


def format_summary(rows) -> str:
    lines = [f"{'problem':<16}{'method':<8}{'best':>12}{'median':>12}{'worst':>12}{'time(min)':>11}"]
    for r in rows:
        lines.append(
            f"{r.problem:<16}{r.method:<8}{r.best:>12.4f}{r.median:>12.4f}"
            f"{r.worst:>12.4f}{r.median_time_min:>11.3f}"
        )
    return "\n".join(lines)
