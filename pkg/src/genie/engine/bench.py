"""Benchmarks: reuse effectiveness, query-class speedups, progressive stages.

All benchmarks report model-estimated seconds alongside wall time so
desk-scale runs compare against minute-scale published ratios; reductions
and speedups are ratio contracts, not absolute times.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from importlib import resources
from pathlib import Path

import numpy as np

from ..gridstore.geometry import parse_timestamp
from ..qlang import parse
from ..qlang.ast import SelectQuery
from .config import EngineConfig
from .core import Engine


def bundled_query(name: str) -> str:
    return (resources.files("genie") / "data" / "scenario" / "queries" / name).read_text()


@dataclass
class QueryStats:
    index: int
    invocations: int = 0
    estimated_s: float = 0.0
    bytes_materialized: int = 0
    wall_s: float = 0.0
    rows: int = 0


@dataclass
class ModeStats:
    mode: str
    queries: list[QueryStats] = dc_field(default_factory=list)

    @property
    def invocations(self) -> int:
        return sum(q.invocations for q in self.queries)

    @property
    def estimated_s(self) -> float:
        return sum(q.estimated_s for q in self.queries)

    @property
    def bytes_materialized(self) -> int:
        return sum(q.bytes_materialized for q in self.queries)

    @property
    def wall_s(self) -> float:
        return sum(q.wall_s for q in self.queries)

    @property
    def mean_latency_s(self) -> float:
        return self.wall_s / len(self.queries) if self.queries else 0.0


@dataclass
class ReuseReport:
    without_reuse: ModeStats
    with_reuse: ModeStats

    def reduction(self, metric: str) -> float:
        a = getattr(self.without_reuse, metric)
        b = getattr(self.with_reuse, metric)
        return 1.0 - (b / a) if a else 0.0

    def to_rows(self) -> list[dict]:
        rows = []
        for mode in (self.without_reuse, self.with_reuse):
            for q in mode.queries:
                rows.append({"mode": mode.mode, "query": q.index,
                             "invocations": q.invocations,
                             "estimated_s": round(q.estimated_s, 4),
                             "bytes": q.bytes_materialized,
                             "wall_s": round(q.wall_s, 3), "rows": q.rows})
        return rows

    def summary(self) -> dict:
        return {
            "invocations_without": self.without_reuse.invocations,
            "invocations_with": self.with_reuse.invocations,
            "invocation_reduction": round(self.reduction("invocations"), 4),
            "estimated_s_without": round(self.without_reuse.estimated_s, 4),
            "estimated_s_with": round(self.with_reuse.estimated_s, 4),
            "estimated_reduction": round(self.reduction("estimated_s"), 4),
            "bytes_without": self.without_reuse.bytes_materialized,
            "bytes_with": self.with_reuse.bytes_materialized,
            "bytes_reduction": round(self.reduction("bytes_materialized"), 4),
            "mean_latency_without_s": round(self.without_reuse.mean_latency_s, 3),
            "mean_latency_with_s": round(self.with_reuse.mean_latency_s, 3),
        }


def _run_statements(engine: Engine, selects, reset_between: bool) -> ModeStats:
    stats = ModeStats("no_reuse" if reset_between else "reuse")
    for i, stmt in enumerate(selects, 1):
        if reset_between:
            engine.reset_state()
        t0 = time.perf_counter()
        qs = QueryStats(i)
        for res in engine.execute(stmt):
            qs.invocations += res.invocations
            qs.estimated_s += res.estimated_s
            qs.bytes_materialized += res.bytes_materialized
            qs.rows = len(res.rows)
        qs.wall_s = time.perf_counter() - t0
        stats.queries.append(qs)
    return stats


def bench_reuse(workload_text: str, config: EngineConfig | None = None) -> ReuseReport:
    """Run the workload twice: coverage reset before each query vs kept."""
    statements = [s for s in parse(workload_text).statements
                  if isinstance(s, SelectQuery)]
    if len(statements) < 2:
        raise ValueError("reuse workload needs at least two SELECTs")
    modes = {}
    base = config or EngineConfig()
    isolated = EngineConfig(**{**base.__dict__, "data_dir": None,
                               "warm_start_budget_s": 0.0})
    for reset in (True, False):
        engine = Engine(isolated)
        try:
            modes[reset] = _run_statements(engine, statements, reset)
        finally:
            engine.close()
    report = ReuseReport(modes[True], modes[False])
    _check_log_consistency(report)
    return report


def _check_log_consistency(report: ReuseReport) -> None:
    for mode in (report.without_reuse, report.with_reuse):
        assert mode.invocations == sum(q.invocations for q in mode.queries)


# --- query classes (adaptive vs static baselines) ----------------------------------

@dataclass
class ClassResult:
    name: str
    adaptive_estimated_s: float
    static_high_estimated_s: float
    accuracy: float
    adaptive_wall_s: float
    static_wall_s: float

    @property
    def speedup(self) -> float:
        return (self.static_high_estimated_s / self.adaptive_estimated_s
                if self.adaptive_estimated_s else float("inf"))


def _final_rows(engine: Engine, text: str):
    results = list(engine.execute(text))
    return results[-1].rows, results


def answer_accuracy(rows_a: list[dict], rows_b: list[dict],
                    bucket_s: int | None = None) -> float:
    """1 - relative L1 distance between matched numeric answers."""
    def buckets(rows):
        out: dict[tuple, list[float]] = {}
        for r in rows:
            key, vals = [], []
            for k in sorted(r):
                v = r[k]
                if isinstance(v, str) and len(v) == 16 and v[4] == "-":
                    ts = parse_timestamp(v)
                    if bucket_s:
                        ts = (ts // bucket_s) * bucket_s
                    key.append((k, ts))
                elif isinstance(v, float):
                    vals.append(v)
                else:
                    key.append((k, str(v)))
            out.setdefault(tuple(key), []).extend(vals or [0.0])
        return {k: float(np.mean(v)) for k, v in out.items()}

    ba, bb = buckets(rows_a), buckets(rows_b)
    keys = sorted(set(ba) | set(bb))
    if not keys:
        return 1.0
    num = sum(abs(ba.get(k, 0.0) - bb.get(k, 0.0)) for k in keys)
    den = sum(abs(bb.get(k, 0.0)) for k in keys)
    if den == 0:
        return 1.0 if num == 0 else 0.0
    return max(0.0, min(1.0, 1.0 - num / den))


def bench_query_classes(config: EngineConfig | None = None,
                        queries: dict[str, str] | None = None) -> list[ClassResult]:
    """Adaptive vs Static-High estimated runtime and answer fidelity."""
    queries = queries or {
        "Q1": bundled_query("q1_overview.sql"),
        "Q2": bundled_query("q2_stations.sql"),
        "Q3": bundled_query("q3_temporal.sql"),
    }
    base = config or EngineConfig()
    out = []
    for name, text in queries.items():
        adaptive_cfg = EngineConfig(**{**base.__dict__, "mode": "heuristic",
                                       "data_dir": None,
                                       "answer_row_cap": 400000})
        static_cfg = EngineConfig(**{**base.__dict__, "mode": "static_high",
                                     "data_dir": None,
                                     "answer_row_cap": 400000})
        eng_a = Engine(adaptive_cfg)
        try:
            t0 = time.perf_counter()
            rows_a, results_a = _final_rows(eng_a, text)
            wall_a = time.perf_counter() - t0
            est_a = sum(r.estimated_s for r in results_a)
            final_res_a = (results_a[-1].spatial_res, results_a[-1].temporal_res)
        finally:
            eng_a.close()
        eng_s = Engine(static_cfg)
        try:
            t0 = time.perf_counter()
            rows_s, results_s = _final_rows(eng_s, text)
            wall_s = time.perf_counter() - t0
            est_s = sum(r.estimated_s for r in results_s)
        finally:
            eng_s.close()
        bucket = round(max(final_res_a[1], 0.25) * 3600)
        acc = answer_accuracy(rows_a, rows_s, bucket_s=bucket)
        out.append(ClassResult(name, est_a, est_s, acc, wall_a, wall_s))
    return out


# --- progressive refinement -----------------------------------------------------------

@dataclass
class ProgressiveRun:
    epoch_latencies: dict[int, float]
    epoch_errors: dict[int, float]
    time_to_first_s: float
    static_wall_s: float
    epoch2_extent: list
    epoch1_field: object


def run_progressive(config: EngineConfig | None = None,
                    query: str | None = None,
                    reference_rows: list[dict] | None = None,
                    static_wall_s: float | None = None) -> ProgressiveRun:
    """One adaptive run with per-epoch errors vs a Static-High reference."""
    text = query or bundled_query("q2_stations.sql")
    base = config or EngineConfig()
    if reference_rows is None or static_wall_s is None:
        eng_s = Engine(EngineConfig(**{**base.__dict__, "mode": "static_high"}))
        try:
            t0 = time.perf_counter()
            reference_rows, _ = _final_rows(eng_s, text)
            static_wall_s = time.perf_counter() - t0
        finally:
            eng_s.close()
    eng = Engine(EngineConfig(**{**base.__dict__, "mode": "adaptive"}))
    latencies: dict[int, float] = {}
    errors: dict[int, float] = {}
    first = None
    epoch2_extent = []
    epoch1_field = None
    try:
        t0 = time.perf_counter()
        for res in eng.execute(text):
            if first is None:
                first = time.perf_counter() - t0
            latencies[res.epoch] = res.latency_s
            bucket = round(max(res.temporal_res, 0.25) * 3600)
            errors[res.epoch] = 1.0 - answer_accuracy(res.rows, reference_rows,
                                                      bucket_s=bucket)
            if res.epoch == 2:
                epoch2_extent = res.extent
        attr = ("smoke_dispersion", "concentration")
        epoch1_field, _ = eng.store.read_window(
            attr, eng.domain.bbox, eng.domain.interval,
            eng.domain.spatial_ladder[0], eng.domain.temporal_ladder[0],
            exact_res=True)
    finally:
        eng.close()
    return ProgressiveRun(latencies, errors, first or 0.0, static_wall_s,
                          epoch2_extent, epoch1_field)
