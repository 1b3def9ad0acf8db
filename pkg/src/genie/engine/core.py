"""The engine: statement execution with epoch-streamed results.

DDL applies synchronously.  A SELECT schedules epochs, builds a gap-driven
plan per epoch, fans generation jobs out to the worker pool in dependency
order, materializes results under replacement consistency, and answers
from the finest fully-covering resolution so far.  Results stream per
epoch; everything lands in the query log.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from ..catalog import Catalog
from ..coverage import CoverageEntry, CoverageMap, QueryLog
from ..errors import EngineError, GenieError, NoPriorQuery
from ..gridstore import GridStore
from ..gridstore.field import GridField
from ..gridstore.geometry import BBox, Domain, TimeInterval, buffer_extent
from ..planner import (POINT, EpochPlan, ExecutionPlan, ParameterAssignment,
                       RequirementSpec, build_plan, ensemble_combine,
                       extract_requirements, hot_cell_extent, layer_hints,
                       merge_hints, schedule_epochs, select_parameters,
                       _assignment)
from ..qlang import bind, parse
from ..qlang.ast import (AlterAddVirtualStmt, CreateTableStmt, HintClause,
                         RegisterSimulatorStmt, SelectQuery)
from ..simkit import SimRequest, build_adapters, job_seed, load_scenario
from ..simkit.scenario import Scenario, scenario_dir
from .answer import Evaluator
from .config import EngineConfig


@dataclass
class EpochResult:
    epoch: int
    rows: list[dict]
    latency_s: float
    invocations: int
    covered_fraction: float
    estimated_s: float = 0.0
    bytes_materialized: int = 0
    spatial_res: float = 0.0
    temporal_res: float = 0.0
    extent: list[BBox] = dc_field(default_factory=list)
    field_summary: dict = dc_field(default_factory=dict)

    def to_json(self) -> dict:
        return {"epoch": self.epoch, "rows": self.rows,
                "latency_s": self.latency_s, "invocations": self.invocations,
                "covered_fraction": self.covered_fraction,
                "estimated_s": self.estimated_s,
                "bytes_materialized": self.bytes_materialized,
                "spatial_res": self.spatial_res,
                "temporal_res": self.temporal_res,
                "extent": [b.to_json() for b in self.extent],
                "field_summary": self.field_summary}


@dataclass
class Session:
    session_id: str
    last_bound: object = None
    last_req: RequirementSpec | None = None
    last_attr: tuple[str, str] | None = None


class Engine:
    def __init__(self, config: EngineConfig | None = None,
                 scenario: Scenario | None = None):
        self.config = config or EngineConfig()
        if scenario is None:
            root = None if self.config.scenario == "demo" else self.config.scenario
            scenario = load_scenario(root)
        self.scenario = scenario
        self.domain: Domain = scenario.domain
        self.adapters = build_adapters(scenario)
        data_dir = Path(self.config.data_dir) if self.config.data_dir else None
        catalog_path = data_dir / "catalog.json" if data_dir else None
        self.catalog = Catalog(self.adapters, path=catalog_path)
        self.store = GridStore(self.domain, data_dir / "store" if data_dir else None)
        self.coverage = CoverageMap(self.domain,
                                    strict_signature=self.config.strict_signature)
        self.query_log = QueryLog(data_dir / "query_log.jsonl" if data_dir else None)
        self.config_dir = data_dir / "control" if data_dir else None
        self._pool = ThreadPoolExecutor(max_workers=self.config.workers)
        self._rebuild_coverage()
        self._bootstrap()

    # -- setup ------------------------------------------------------------------

    def _bootstrap(self) -> None:
        if not self.catalog.simulators:
            self.run_script((self.scenario.root / "schema.sql").read_text("utf-8"))
        for table, filename in self.config.ingest.items():
            path = self.scenario.root / filename
            if path.exists() and self.store.table(table) is None:
                schema = self.catalog.table_schema(table)
                pk = schema.primary_key if schema else None
                self.store.ingest(table, path, primary_key=pk)

    def _rebuild_coverage(self) -> None:
        """Restart path: coverage re-derived from the store manifest."""
        for attr in self.store.attributes():
            for sf in self.store.fields(attr):
                f = sf.field
                self.coverage.record(CoverageEntry(
                    attr, f.bbox, f.interval, f.spatial_res, f.temporal_res,
                    f.param_signature, epoch=sf.epoch, created_at=sf.created_at,
                    runtime_s=sf.runtime_s))

    def reset_state(self) -> None:
        """Drop materialized data and coverage (not the catalog or tables)."""
        self.store.reset_fields()
        self.coverage.clear()

    def close(self) -> None:
        self._pool.shutdown(wait=True)

    # -- statement execution ---------------------------------------------------------

    def run_script(self, text: str, session: Session | None = None):
        """Execute a script; returns a list of (statement, results) pairs."""
        out = []
        for stmt in parse(text).statements:
            results = list(self.execute(stmt, session))
            out.append((stmt, results))
        return out

    def execute(self, statement, session: Session | None = None):
        if isinstance(statement, str):
            parsed = parse(statement).statements
            if len(parsed) != 1:
                raise EngineError("execute() takes exactly one statement")
            statement = parsed[0]
        if isinstance(statement, RegisterSimulatorStmt):
            self.catalog.register_simulator(statement)
            return iter(())
        if isinstance(statement, CreateTableStmt):
            self.catalog.create_table(statement)
            return iter(())
        if isinstance(statement, AlterAddVirtualStmt):
            self.catalog.add_virtual_column(statement)
            return iter(())
        if isinstance(statement, SelectQuery):
            return self._execute_select(statement, session)
        raise EngineError(f"cannot execute {type(statement).__name__}")

    def _execute_select(self, query: SelectQuery, session: Session | None):
        bound = bind(query, self.catalog, self.store)
        req = extract_requirements(bound, self.catalog, self.store, self.domain,
                                   self.config.floors)
        if session is not None:
            session.last_bound = bound
            session.last_req = req
            session.last_attr = req.attributes[0] if req.attributes else None
        if not req.attributes:
            rows = Evaluator(bound, self.store, {}, self.config.answer_row_cap).run()
            yield EpochResult(1, rows, 0.0, 0, 1.0)
            return
        eplan = self._schedule(req)
        yield from self._run_epochs(bound, req, eplan)

    def _schedule(self, req: RequirementSpec) -> EpochPlan:
        threshold = self.config.threshold_for(req.attributes[0])
        if self.config.mode == "heuristic":
            # one-shot class-parameter run, no progressive ladder
            assign = select_parameters(req, self.catalog, self.domain)
            from ..planner import EpochSpec
            return EpochPlan({1: EpochSpec(1, assign, "full")}, threshold)
        if self.config.mode == "static_high":
            assign = _assignment(req, self.catalog, self.domain.spatial_ladder[-1],
                                 self.domain.temporal_ladder[-1], {})
            from ..planner import EpochSpec
            return EpochPlan({1: EpochSpec(1, assign, "full-domain")}, threshold)
        if self.config.mode == "static_low":
            assign = _assignment(req, self.catalog, self.domain.spatial_ladder[0],
                                 self.domain.temporal_ladder[0], {})
            from ..planner import EpochSpec
            return EpochPlan({1: EpochSpec(1, assign, "full-domain")}, threshold)
        return schedule_epochs(req, self.catalog, self.domain, threshold,
                               auto_epoch3=self.config.auto_epoch3)

    # -- epoch loop ----------------------------------------------------------------------

    def _run_epochs(self, bound, req: RequirementSpec, eplan: EpochPlan,
                    base_epoch_offset: int = 0):
        t_query = time.perf_counter()
        log_epochs = []
        prior_rows: list[dict] = []
        for epoch_no in sorted(eplan.epochs):
            spec = eplan.epochs[epoch_no]
            t0 = time.perf_counter()
            extent = self._epoch_extent(spec, req, eplan)
            if extent is None:     # rule produced nothing to refine
                yield EpochResult(epoch_no + base_epoch_offset, prior_rows, 0.0, 0,
                                  1.0, spatial_res=spec.assignment.spatial_res,
                                  temporal_res=spec.assignment.temporal_res)
                continue
            sub_req = replace(req, extent=extent)
            result = self._run_plan_epoch(bound, sub_req, req, spec.assignment,
                                          epoch_no + base_epoch_offset)
            result.latency_s = time.perf_counter() - t0
            prior_rows = result.rows
            log_epochs.append({"epoch": result.epoch,
                               "latency_s": result.latency_s,
                               "invocations": result.invocations,
                               "estimated_s": result.estimated_s,
                               "bytes": result.bytes_materialized,
                               "spatial_res": result.spatial_res,
                               "temporal_res": result.temporal_res})
            yield result
        self._log(bound, req, log_epochs, time.perf_counter() - t_query)

    def _epoch_extent(self, spec, req: RequirementSpec,
                      eplan: EpochPlan) -> list[BBox] | None:
        if spec.extent_rule == "full":
            return list(req.extent)
        if spec.extent_rule == "full-domain":
            return [self.domain.bbox]   # static baselines over-generate everywhere
        attr = req.attributes[0]
        if spec.extent_rule == "hot-cells":
            coarse = eplan.epochs[1].assignment
            field, _ = self.store.read_window(attr, _bounding(req.extent),
                                              req.interval, coarse.spatial_res,
                                              coarse.temporal_res, exact_res=True)
            boxes = hot_cell_extent(field, eplan.refine_threshold, self.domain)
            return boxes or None
        if spec.extent_rule == "hot-stations":
            return self._hot_station_extent(req, eplan)
        raise EngineError(f"unknown extent rule {spec.extent_rule}")

    def _hot_station_extent(self, req: RequirementSpec,
                            eplan: EpochPlan) -> list[BBox] | None:
        table = self.store.table(req.anchor_table or "")
        if table is None:
            return None
        attr = req.attributes[0]
        assign = eplan.epochs[max(e for e in eplan.epochs if e < 3)].assignment \
            if any(e < 3 for e in eplan.epochs) else None
        if assign is None:
            return None
        field, _ = self.store.read_window(attr, _bounding(req.extent), req.interval,
                                          assign.spatial_res, assign.temporal_res,
                                          exact_res=True)
        hot_points = []
        for row in table.rows:
            lat, lon = float(row["lat"]), float(row["lon"])
            if not field.bbox.contains_point(lat, lon):
                continue
            i = min(int((lat - field.bbox.lat_min) / field.spatial_res), field.nlat - 1)
            j = min(int((lon - field.bbox.lon_min) / field.spatial_res), field.nlon - 1)
            if field.values[i, j, :].max() > eplan.refine_threshold:
                hot_points.append((lat, lon))
        if not hot_points:
            return None
        return buffer_extent(hot_points, 2000.0, self.domain.bbox)

    def _run_plan_epoch(self, bound, sub_req: RequirementSpec,
                        answer_req: RequirementSpec,
                        assignment: ParameterAssignment, epoch_no: int) -> EpochResult:
        plan = build_plan(sub_req, assignment, self.catalog, self.coverage,
                          self.domain, self._estimator(), bound=bound,
                          input_scope=self._input_scope, epoch=epoch_no)
        covered_before = self._covered_fraction(sub_req, assignment)
        invocations, est_s, bytes_m = self._execute_steps(plan, epoch_no)
        rows, answer_res, summary = self._answer(bound, answer_req)
        return EpochResult(epoch_no, rows, 0.0, invocations, covered_before,
                           estimated_s=est_s, bytes_materialized=bytes_m,
                           spatial_res=answer_res[0], temporal_res=answer_res[1],
                           extent=list(sub_req.extent), field_summary=summary)

    def _covered_fraction(self, req: RequirementSpec,
                          assignment: ParameterAssignment) -> float:
        fractions = []
        for attr in req.attributes:
            rep = self.coverage.classify_reuse(attr, req.extent, req.interval,
                                               assignment.spatial_res,
                                               assignment.temporal_res)
            fractions.append(rep.covered_fraction)
        return min(fractions) if fractions else 1.0

    def _estimator(self):
        def estimate(sim_name, params, area_deg2, interval):
            reg = self.catalog.simulator(sim_name)
            return self.adapters[reg.adapter_id].estimate(params, area_deg2, interval)
        return estimate

    def _input_scope(self, sim_name: str) -> str:
        try:
            reg = self.catalog.simulator(sim_name)
        except GenieError:
            return "extent"
        # Lagrangian transport is non-local: inputs must span the domain
        return "domain" if reg.adapter_id in ("hysplit", "calpuff") else "extent"

    # -- step execution ---------------------------------------------------------------------

    def _execute_steps(self, plan: ExecutionPlan, epoch_no: int):
        invocations = 0
        est_total = 0.0
        bytes_total = 0
        by_attr: dict[tuple[str, str], list] = {}
        for step in plan.generate_steps():
            by_attr.setdefault(step.attribute, []).append(step)
        ensembles = {s.attribute: s for s in plan.steps if s.kind == "ensemble"}

        for attr in [a for a in _attr_order(plan) if a in by_attr]:
            steps = by_attr[attr]
            ens = ensembles.get(attr)
            if ens is not None:
                groups: dict[tuple, list] = {}
                for s in steps:
                    groups.setdefault((tuple(s.extent), s.interval), []).append(s)
                jobs = [self._pool.submit(self._run_ensemble_group, group, ens,
                                          epoch_no) for group in groups.values()]
            else:
                jobs = [self._pool.submit(self._run_generate, s, epoch_no)
                        for s in steps]
            for job in jobs:
                inv, est, nbytes = job.result()
                invocations += inv
                est_total += est
                bytes_total += nbytes
        return invocations, est_total, bytes_total

    def _sim_inputs(self, step) -> dict:
        inputs = {}
        scope = self._input_scope(step.simulator)
        for dep in step.inputs:
            if scope == "domain":
                box = self.domain.bbox
            else:
                box = _bounding(step.extent)
            inputs[dep] = self.store.read(dep, box, step.interval,
                                          step.params["spatial_res"],
                                          step.params["temporal_res"])
        return inputs

    def _run_generate(self, step, epoch_no: int):
        reg = self.catalog.simulator(step.simulator)
        adapter = self.adapters[reg.adapter_id]
        request = SimRequest(self.domain, list(step.extent), step.interval,
                             dict(step.params), attribute=step.attribute,
                             inputs=self._sim_inputs(step),
                             seed=job_seed(self.config.seed, step.simulator,
                                           _bounding(step.extent), step.interval,
                                           step.params))
        result = adapter.execute(request, config_dir=self.config_dir)
        nbytes = 0
        for f in result.fields:
            self.store.materialize(f, epoch=epoch_no, runtime_s=result.runtime_s)
            self.coverage.record(CoverageEntry(
                f.attribute, f.bbox, f.interval, f.spatial_res, f.temporal_res,
                f.param_signature, epoch=epoch_no, created_at=time.time(),
                runtime_s=result.runtime_s))
            nbytes += f.disk_bytes
        return 1, step.estimate_s, nbytes

    def _run_ensemble_group(self, steps, ens, epoch_no: int):
        fields = []
        est = 0.0
        for step in steps:
            reg = self.catalog.simulator(step.simulator)
            adapter = self.adapters[reg.adapter_id]
            request = SimRequest(self.domain, list(step.extent), step.interval,
                                 dict(step.params), attribute=step.attribute,
                                 inputs=self._sim_inputs(step),
                                 seed=job_seed(self.config.seed, step.simulator,
                                               _bounding(step.extent), step.interval,
                                               step.params))
            result = adapter.execute(request, config_dir=self.config_dir)
            fields.append(result.fields)
            est += step.estimate_s
        weights = list(ens.weights)[:len(fields)]
        nbytes = 0
        for box_fields in zip(*fields):
            combined = ensemble_combine(list(box_fields), weights)
            self.store.materialize(combined, epoch=epoch_no)
            self.coverage.record(CoverageEntry(
                combined.attribute, combined.bbox, combined.interval,
                combined.spatial_res, combined.temporal_res,
                combined.param_signature, epoch=epoch_no, created_at=time.time()))
            nbytes += combined.disk_bytes
        return len(steps), est, nbytes

    # -- answering ------------------------------------------------------------------------------

    def _answer(self, bound, req: RequirementSpec):
        attr = req.attributes[0]
        resolution = self._finest_covering(req)
        fields = {}
        valids = {}
        for a in req.attributes:
            fields[a], valids[a] = self.store.read_window(
                a, _bounding(req.extent), req.interval,
                resolution[0], resolution[1])
        attribution = self._attribution()
        rows = Evaluator(bound, self.store, fields, self.config.answer_row_cap,
                         attribution, valids).run()
        f, v = fields[attr], valids[attr]
        covered = f.values[v] if v.any() else np.zeros(1)
        summary = {"min": float(covered.min()), "max": float(covered.max()),
                   "mean": float(covered.mean())}
        return rows, resolution, summary

    def _finest_covering(self, req: RequirementSpec) -> tuple[float, float]:
        """Finest (sres, tres) at which the whole requirement is covered."""
        min_su = max(self.coverage.finest_resolutions(a)[0] for a in req.attributes)
        min_ts = max(self.coverage.finest_resolutions(a)[1] for a in req.attributes)
        pairs = sorted({(s, t) for s in self.domain.spatial_ladder
                        for t in self.domain.temporal_ladder
                        if round(s * 1e6) >= min_su and round(t * 3600) >= min_ts})
        for sres, tres in pairs:    # finest first (sorted ascending)
            if all(self.coverage.fully_covered(a, req.extent, req.interval,
                                               sres, tres)
                   for a in req.attributes):
                return (sres, tres)
        raise EngineError("requirement is not covered at any resolution")

    def _attribution(self) -> dict:
        """Single-source attribution values for simulated tables."""
        out: dict[str, dict] = {}
        fires = self.scenario.ignitions
        if len(fires) == 1:
            out["smoke_dispersion"] = {"source_fire_id": fires[0]["fire_id"]}
            out["fire_emissions"] = {"fire_id": fires[0]["fire_id"]}
        return out

    # -- warm start -------------------------------------------------------------------------------

    def warm_start(self, budget_s: float) -> list[CoverageEntry]:
        """Coarsest-rung generation over the domain, tile by tile, until the
        estimated budget runs out.  Entries are tagged epoch 0."""
        if budget_s < 0:
            raise EngineError("budget must be >= 0")
        entries: list[CoverageEntry] = []
        if budget_s == 0:
            return entries
        sres = self.domain.spatial_ladder[0]
        tres = self.domain.temporal_ladder[0]
        spent = 0.0
        spec = self.domain.grid(sres, tres)
        box, iv = spec.snap_outward(self.domain.bbox, self.domain.interval)
        (i0, i1), (j0, j1), _ = spec.cells_intersecting(self.domain.bbox,
                                                        self.domain.interval)
        seen: set[tuple[str, str]] = set()
        order: list = []
        for vdef in self.catalog.virtual_columns():
            for item in self.catalog.topo_order(vdef.attribute):
                if item[0].attribute not in seen:
                    seen.add(item[0].attribute)
                    order.append(item)
        estimator = self._estimator()
        for vdef, reg in order:
            params = _assignment(
                RequirementSpec([vdef.attribute], [self.domain.bbox],
                                self.domain.interval, "overview", 0.85),
                self.catalog, sres, tres, {}).params_for(vdef.simulators[0])
            for i in range(i0, i1):
                for j in range(j0, j1):
                    tile = spec.cell_bbox(i, j)
                    gaps = self.coverage.find_gaps(vdef.attribute, [tile], iv,
                                                   sres, tres)
                    if gaps.empty:
                        continue
                    est, _ = estimator(vdef.simulators[0], params,
                                       tile.area_deg2, iv)
                    if spent + est > budget_s:
                        return entries
                    step = _WarmStep(vdef.simulators[0], vdef.attribute, params,
                                     [tile], iv, vdef.depends_on, est)
                    self._run_generate(step, epoch_no=0)
                    spent += est
                    entries.append(self.coverage.entries(vdef.attribute)[-1])
        return entries

    # -- refinement --------------------------------------------------------------------------------

    def refine(self, session: Session, region: BBox, hint: HintClause | None = None):
        if session.last_bound is None or session.last_req is None:
            raise NoPriorQuery("refine requires a prior query in this session")
        req = session.last_req
        clamped = self.domain.clamp(region)
        if clamped is None:
            raise EngineError("refine region lies outside the domain")
        hints = layer_hints(req.hint_overrides,
                            hint.as_dict() if hint is not None else {})
        new_req = replace(req, extent=[clamped], hint_overrides=hints)
        assignment = select_parameters(new_req, self.catalog, self.domain)
        from ..planner import EpochSpec
        eplan = EpochPlan({3: EpochSpec(3, assignment, "full")},
                          self.config.threshold_for(req.attributes[0]))
        yield from self._run_epochs(session.last_bound, new_req, eplan)

    # -- logging -----------------------------------------------------------------------------------

    def _log(self, bound, req: RequirementSpec, epochs: list[dict],
             wall_s: float) -> None:
        from ..qlang.render import render_statement
        text = render_statement(bound.query)
        record = {
            "query_hash": hashlib.sha256(text.encode()).hexdigest()[:16],
            "extent": [b.to_json() for b in req.extent],
            "interval": req.interval.to_json(),
            "accuracy_class": req.accuracy_class,
            "epochs": epochs,
            "invocations": sum(e["invocations"] for e in epochs),
            "estimated_s": sum(e["estimated_s"] for e in epochs),
            "bytes_materialized": sum(e["bytes"] for e in epochs),
            "wall_s": wall_s,
        }
        self.query_log.log_query(record)


@dataclass
class _WarmStep:
    simulator: str
    attribute: tuple[str, str]
    params: dict
    extent: list[BBox]
    interval: TimeInterval
    inputs: tuple
    estimate_s: float
    kind = "generate"


def _bounding(extent: list[BBox]) -> BBox:
    return BBox(min(b.lat_min for b in extent), max(b.lat_max for b in extent),
                min(b.lon_min for b in extent), max(b.lon_max for b in extent))


def _attr_order(plan: ExecutionPlan) -> list[tuple[str, str]]:
    seen = []
    for s in plan.generate_steps():
        if s.attribute not in seen:
            seen.append(s.attribute)
    return seen
