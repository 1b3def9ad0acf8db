"""Query planning: requirements, parameter choice, gap-driven plans, epochs.

Accuracy classes follow the query's shape: temporal-evolution queries
(grouped by a time column) are regional; aggregations over large areas or
over station buffers are overview (averaging tolerates coarse cells);
non-aggregated station-buffer queries are point class; anything else is
regional.  Hints always win.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog, SimulatorRegistration, VirtualColumnDef
from .coverage import CoverageMap
from .errors import (ConflictingHints, GeometryMismatch, HintOutOfDomain,
                     Infeasible, PlannerError, ZeroWeightSum)
from .gridstore.field import GridField
from .gridstore.geometry import (BBox, Domain, TimeInterval, buffer_extent,
                                 parse_timestamp)
from .qlang.ast import (BetweenExpr, ColumnRef, FuncCall, InExpr, Literal,
                        ScalarSubquery, walk_expr)
from .qlang.bind import BoundQuery

OVERVIEW, REGIONAL, POINT = "overview", "regional", "point"

CLASS_RESOLUTIONS = {OVERVIEW: (0.2, 3.0), REGIONAL: (0.05, 1.0), POINT: (0.02, 0.5)}
POINT_PARTICLES = 10000
DEFAULT_FLOORS = {OVERVIEW: 0.85, REGIONAL: 0.90, POINT: 0.95}
POINT_BUFFER_MAX_M = 2000.0
OVERVIEW_AREA_FRACTION = 0.25
BARE_HINT_KEYS = ("spatial_res", "temporal_res", "particle_count")


@dataclass
class RequirementSpec:
    attributes: list[tuple[str, str]]
    extent: list[BBox]
    interval: TimeInterval
    accuracy_class: str
    accuracy_floor: float
    hint_overrides: dict[str, float | int | str] = field(default_factory=dict)
    anchor_table: str | None = None        # stored table whose points anchored extent
    buffer_radius_m: float | None = None
    full_domain: bool = False

    def extent_area_deg2(self) -> float:
        return sum(b.area_deg2 for b in self.extent)


@dataclass
class ParameterAssignment:
    per_simulator: dict[str, dict[str, float | int]]
    spatial_res: float
    temporal_res: float

    def params_for(self, simulator: str) -> dict[str, float | int]:
        return dict(self.per_simulator.get(simulator, {}))

    def resolution_key(self) -> tuple[float, float]:
        return (self.spatial_res, self.temporal_res)


@dataclass
class GenerateStep:
    simulator: str
    attribute: tuple[str, str]
    params: dict[str, float | int]
    extent: list[BBox]                  # one invocation covers all its gaps
    interval: TimeInterval
    inputs: tuple[tuple[str, str], ...]
    estimate_s: float = 0.0
    estimate_accuracy: float = 1.0

    kind = "generate"

    def area_deg2(self) -> float:
        return sum(b.area_deg2 for b in self.extent)


@dataclass
class AggregateStep:
    attribute: tuple[str, str]
    spatial_res: float
    temporal_res: float
    extent: list[BBox] = field(default_factory=list)

    kind = "aggregate"


@dataclass
class EnsembleStep:
    attribute: tuple[str, str]
    simulators: tuple[str, ...]
    weights: tuple[float, ...]

    kind = "ensemble"


@dataclass
class AnswerStep:
    bound: BoundQuery | None = None

    kind = "answer"


@dataclass
class ExecutionPlan:
    steps: list
    requirement: RequirementSpec
    assignment: ParameterAssignment
    epoch: int = 1

    def generate_steps(self) -> list[GenerateStep]:
        return [s for s in self.steps if s.kind == "generate"]

    @property
    def estimated_seconds(self) -> float:
        return sum(s.estimate_s for s in self.generate_steps())

    @property
    def estimated_bytes(self) -> int:
        total = 0
        for s in self.generate_steps():
            for box in s.extent:
                shape = GridField.expected_shape(box, s.interval,
                                                 s.params["spatial_res"],
                                                 s.params["temporal_res"])
                total += 4 * int(np.prod(shape))
        return total


@dataclass
class EpochSpec:
    epoch: int
    assignment: ParameterAssignment
    extent_rule: str            # full | hot-cells | hot-stations


@dataclass
class EpochPlan:
    epochs: dict[int, EpochSpec]
    refine_threshold: float

    def __post_init__(self):
        ordered = [self.epochs[e] for e in sorted(self.epochs)]
        for a, b in zip(ordered, ordered[1:]):
            if (b.assignment.spatial_res > a.assignment.spatial_res
                    or b.assignment.temporal_res > a.assignment.temporal_res):
                raise PlannerError("epoch resolutions must not coarsen")


# --- requirement extraction -----------------------------------------------------

def merge_hints(*hint_dicts: dict) -> dict:
    """Equal-precedence merge: the same key must not disagree."""
    out: dict[str, float | int | str] = {}
    for hints in hint_dicts:
        for key, value in (hints or {}).items():
            if key in out and out[key] != value:
                raise ConflictingHints(f"hint {key!r}: {out[key]!r} vs {value!r}")
            out[key] = value
    return out


def layer_hints(base: dict, override: dict) -> dict:
    """Refinement hints replace earlier ones key-for-key, but a bare key
    and a simulator-scoped key addressing the same parameter with
    different values have no defined precedence and are rejected."""
    out = dict(base or {})
    out.update(override or {})
    for key, value in list(out.items()):
        if "." in key:
            bare = key.split(".", 1)[1]
            if bare in out and out[bare] != value:
                raise ConflictingHints(
                    f"hint {key!r}={value!r} conflicts with {bare!r}={out[bare]!r}")
    return out


def extract_requirements(bound: BoundQuery, catalog: Catalog, store,
                         domain: Domain,
                         floors: dict[str, float] | None = None) -> RequirementSpec:
    floors = floors or DEFAULT_FLOORS
    attributes: list[tuple[str, str]] = []
    extent_boxes: list[BBox] = []
    intervals: list[TimeInterval] = []
    anchor_table: str | None = None
    radius: float | None = None

    queries = [bound] + _all_subqueries(bound)
    for bq in queries:
        for b in bq.virtual_columns:
            if (b.table, b.column) not in attributes:
                attributes.append((b.table, b.column))
        boxes, anchor, r = _spatial_extent(bq, store)
        extent_boxes.extend(boxes)
        if anchor is not None and anchor_table is None:
            anchor_table = anchor
            radius = r
        elif anchor is not None and r is not None:
            radius = max(radius or 0.0, r)
        iv = _temporal_window(bq)
        if iv is not None:
            intervals.append(iv)

    full_domain = not extent_boxes
    if full_domain:
        extent = [domain.bbox]
    else:
        clamped = []
        for b in extent_boxes:
            c = domain.clamp(b)
            if c is not None:
                clamped.append(c)
        extent = clamped or [domain.bbox]
    if intervals:
        interval = TimeInterval(min(iv.start for iv in intervals),
                                max(iv.end for iv in intervals))
        clipped = domain.interval.intersection(interval)
        interval = clipped if clipped is not None else domain.interval
    else:
        interval = domain.interval

    klass = _accuracy_class(bound, domain, extent, full_domain, anchor_table, radius)
    hints = merge_hints(bound.query.hint.as_dict() if bound.query.hint else {})
    return RequirementSpec(attributes, extent, interval, klass, floors[klass],
                           hint_overrides=hints, anchor_table=anchor_table,
                           buffer_radius_m=radius, full_domain=full_domain)


def _all_subqueries(bound: BoundQuery) -> list[BoundQuery]:
    out = []
    for sub in bound.subqueries:
        out.append(sub)
        out.extend(_all_subqueries(sub))
    return out


def _spatial_extent(bound: BoundQuery, store):
    """Buffers around DWithin anchors, or point boxes for Intersects."""
    boxes: list[BBox] = []
    anchor = None
    radius = None
    for expr in _condition_exprs(bound):
        for node in walk_expr(expr):
            if not isinstance(node, FuncCall):
                continue
            if node.name == "ST_DWITHIN" and len(node.args) == 3:
                pts, table = _stored_points(bound, store, node.args[:2])
                r = node.args[2]
                if pts and isinstance(r, Literal):
                    radius_m = float(r.value)
                    boxes.extend(buffer_extent(pts, radius_m))
                    anchor, radius = table, max(radius or 0.0, radius_m)
            elif node.name == "ST_INTERSECTS" and len(node.args) == 2:
                pts, table = _stored_points(bound, store, node.args)
                if pts:
                    boxes.extend(BBox(la, la, lo, lo) for la, lo in pts)
                    anchor = anchor or table
    return boxes, anchor, radius


def _condition_exprs(bound: BoundQuery):
    q = bound.query
    exprs = [j.condition for j in q.joins]
    if q.where is not None:
        exprs.append(q.where)
    return exprs


def _stored_points(bound: BoundQuery, store, args):
    for arg in args:
        if not isinstance(arg, ColumnRef):
            continue
        try:
            binding = bound.resolve(arg)
        except Exception:
            continue
        table = store.table(binding.table) if store is not None else None
        if table is not None and binding.kind == "stored" and table.points():
            return table.points(), binding.table
    return [], None


def _temporal_window(bound: BoundQuery) -> TimeInterval | None:
    q = bound.query
    for expr in ([q.where] if q.where is not None else []):
        for node in walk_expr(expr):
            if (isinstance(node, BetweenExpr)
                    and isinstance(node.operand, ColumnRef)
                    and isinstance(node.low, Literal) and node.low.kind == "string"
                    and isinstance(node.high, Literal)):
                try:
                    return TimeInterval(parse_timestamp(str(node.low.value)),
                                        parse_timestamp(str(node.high.value)))
                except Exception:
                    continue
    return None


def _accuracy_class(bound: BoundQuery, domain: Domain, extent: list[BBox],
                    full_domain: bool, anchor_table: str | None,
                    radius: float | None) -> str:
    from .qlang.ast import contains_aggregate
    q = bound.query
    has_agg = any(contains_aggregate(p.expr) for p in q.projections)
    time_grouped = any(_is_temporal_column(bound, g) for g in q.group_by)
    if time_grouped:
        return REGIONAL
    area = sum(b.area_deg2 for b in extent)
    if has_agg and (full_domain
                    or area > OVERVIEW_AREA_FRACTION * domain.bbox.area_deg2):
        return OVERVIEW
    if has_agg and anchor_table is not None:
        return OVERVIEW
    if (anchor_table is not None and radius is not None
            and radius <= POINT_BUFFER_MAX_M):
        return POINT
    return REGIONAL


def _is_temporal_column(bound: BoundQuery, ref: ColumnRef) -> bool:
    name = ref.name.lower()
    return name in ("timestamp", "time", "start_time", "forecast_time")


# --- parameter selection -----------------------------------------------------------

def select_parameters(req: RequirementSpec, catalog: Catalog,
                      domain: Domain) -> ParameterAssignment:
    sres, tres = CLASS_RESOLUTIONS[req.accuracy_class]
    overrides = dict(req.hint_overrides)
    if "spatial_res" in overrides:
        sres = _numeric_hint(overrides, "spatial_res")
    if "temporal_res" in overrides:
        tres = _numeric_hint(overrides, "temporal_res")
    sres = domain.snap_spatial(float(sres))
    tres = domain.snap_temporal(float(tres))
    return _assignment(req, catalog, sres, tres, overrides, class_defaults=True)


def _numeric_hint(overrides: dict, key: str) -> float:
    v = overrides[key]
    if isinstance(v, str):
        raise HintOutOfDomain(f"hint {key!r} must be numeric, got {v!r}")
    return float(v)


def _assignment(req: RequirementSpec, catalog: Catalog, sres: float, tres: float,
                overrides: dict, class_defaults: bool = False) -> ParameterAssignment:
    simulators = _involved_simulators(req, catalog)
    known_bare = set(BARE_HINT_KEYS)
    per_sim: dict[str, dict[str, float | int]] = {}
    for name in simulators:
        reg = catalog.simulator(name)
        params: dict[str, float | int] = dict(reg.defaults())
        if reg.parameter("spatial_res") is not None:
            params["spatial_res"] = sres
        if reg.parameter("temporal_res") is not None:
            params["temporal_res"] = tres
        if class_defaults and req.accuracy_class == POINT \
                and reg.parameter("particle_count") is not None \
                and "particle_count" not in overrides:
            params["particle_count"] = POINT_PARTICLES
        if "particle_count" in overrides and reg.parameter("particle_count"):
            params["particle_count"] = int(overrides["particle_count"])
        for key, value in overrides.items():
            if "." in key:
                sim, pname = key.split(".", 1)
                if sim == name:
                    spec = reg.parameter(pname)
                    if spec is None:
                        raise HintOutOfDomain(f"{name} has no parameter {pname!r}")
                    params[pname] = spec.coerce(value)
        per_sim[name] = params
    for key in overrides:
        if "." in key:
            sim, pname = key.split(".", 1)
            if sim not in simulators:
                raise HintOutOfDomain(f"hint scope {sim!r} is not a planned simulator")
        elif key not in known_bare:
            raise HintOutOfDomain(f"unknown hint key {key!r}")
    _validate_candidates(per_sim, catalog)
    return ParameterAssignment(per_sim, sres, tres)


def _validate_candidates(per_sim: dict, catalog: Catalog) -> None:
    for name, params in per_sim.items():
        reg = catalog.simulator(name)
        pc = params.get("particle_count")
        spec = reg.parameter("particle_count")
        if pc is not None and spec is not None and spec.candidates \
                and pc not in spec.candidates:
            raise HintOutOfDomain(
                f"particle_count {pc} outside candidates {spec.candidates}")


def _involved_simulators(req: RequirementSpec, catalog: Catalog) -> list[str]:
    sims: list[str] = []
    for attr in req.attributes:
        for vdef, _ in catalog.topo_order(attr):
            for s in vdef.simulators:
                if s not in sims:
                    sims.append(s)
    return sims


def optimize_parameters(simulator: SimulatorRegistration, extent: list[BBox],
                        interval: TimeInterval, q_required: float,
                        estimates) -> dict[str, float | int]:
    """Cheapest candidate assignment meeting the accuracy floor.

    ``estimates(params) -> (seconds, accuracy)``.  Ties break toward
    higher accuracy, then finer spatial resolution, then enumeration
    order over the candidate grid (coarse to fine as registered).
    """
    names = []
    axes = []
    for p in simulator.parameters:
        if len(p.candidates) > 1:
            names.append(p.name)
            axes.append(p.candidates)
    fixed = {p.name: p.default for p in simulator.parameters
             if len(p.candidates) <= 1 and p.default is not None}
    best = None
    for idx, combo in enumerate(itertools.product(*axes)):
        params = dict(fixed)
        params.update(dict(zip(names, combo)))
        t, a = estimates(params)
        if a < q_required:
            continue
        key = (t, -a, params.get("spatial_res", 0.0), idx)
        if best is None or key < best[0]:
            best = (key, params)
    if best is None:
        raise Infeasible(f"no candidate of {simulator.name} reaches {q_required}")
    return best[1]


# --- plan construction ----------------------------------------------------------------

def build_plan(req: RequirementSpec, assignment: ParameterAssignment,
               catalog: Catalog, coverage: CoverageMap, domain: Domain,
               estimator, bound: BoundQuery | None = None,
               input_scope=None, epoch: int = 1,
               accuracy_floor: float | None = None) -> ExecutionPlan:
    """Gap-driven steps in dependency order.

    ``estimator(simulator_name, params, area_deg2, interval)`` returns
    (seconds, accuracy); ``input_scope(simulator_name)`` returns "domain"
    when a consumer needs its inputs domain-wide (non-local transport).
    """
    input_scope = input_scope or (lambda sim: "extent")
    steps: list = []
    planned: set[tuple[str, str]] = set()
    chains: list[tuple[VirtualColumnDef, SimulatorRegistration]] = []
    for attr in req.attributes:
        for item in catalog.topo_order(attr):
            if item[0].attribute not in planned:
                planned.add(item[0].attribute)
                chains.append(item)

    consumer_scopes: dict[tuple[str, str], str] = {}
    for vdef, _ in chains:
        for sim in vdef.simulators:
            scope = input_scope(sim)
            for dep in vdef.depends_on:
                if scope == "domain":
                    consumer_scopes[dep] = "domain"

    for vdef, reg in chains:
        attr = vdef.attribute
        if consumer_scopes.get(attr) == "domain":
            extent = [domain.bbox]     # a consumer's transport is non-local
        else:
            extent = list(req.extent)  # upstream planned over downstream extents
        sres, tres = assignment.spatial_res, assignment.temporal_res
        gaps = coverage.find_gaps(attr, extent, req.interval, sres, tres)
        reuse = coverage.classify_reuse(attr, extent, req.interval, sres, tres)
        if "resolution" in reuse.kinds:
            steps.append(AggregateStep(attr, sres, tres, extent))
        if not gaps.empty:
            sims = _choose_simulators(vdef, req, assignment, catalog, estimator,
                                      extent, req.interval, accuracy_floor)
            by_interval: dict[TimeInterval, list[BBox]] = {}
            for box, iv in gaps:
                by_interval.setdefault(iv, []).append(box)
            for iv in sorted(by_interval, key=lambda v: (v.start, v.end)):
                boxes = by_interval[iv]
                area = sum(b.area_deg2 for b in boxes)
                for sim in sims:
                    params = assignment.params_for(sim)
                    est_t, est_a = estimator(sim, params, area, iv)
                    steps.append(GenerateStep(sim, attr, params, boxes, iv,
                                              vdef.depends_on, est_t, est_a))
            if len(sims) > 1:
                weights = tuple(estimator(s, assignment.params_for(s),
                                          sum(b.area_deg2 for b in extent),
                                          req.interval)[1] for s in sims)
                steps.append(EnsembleStep(attr, tuple(sims), weights))
    steps.append(AnswerStep(bound))
    return ExecutionPlan(steps, req, assignment, epoch=epoch)


def _choose_simulators(vdef: VirtualColumnDef, req: RequirementSpec,
                       assignment: ParameterAssignment, catalog: Catalog,
                       estimator, extent, interval,
                       accuracy_floor: float | None) -> list[str]:
    if len(vdef.simulators) == 1:
        return list(vdef.simulators)
    if vdef.ensemble_method == "weighted_average":
        return list(vdef.simulators)
    # cheapest feasible single simulator; fall back to cheapest overall
    floor = req.accuracy_floor if accuracy_floor is None else accuracy_floor
    area = sum(b.area_deg2 for b in extent)
    best = None
    for sim in vdef.simulators:
        t, a = estimator(sim, assignment.params_for(sim), area, interval)
        key = (a < floor, t, -a)
        if best is None or key < best[0]:
            best = (key, sim)
    return [best[1]]


# --- epochs -----------------------------------------------------------------------------

EPOCH3_RESOLUTIONS = (0.02, 0.25)


def schedule_epochs(req: RequirementSpec, catalog: Catalog, domain: Domain,
                    refine_threshold: float,
                    auto_epoch3: bool = True) -> EpochPlan:
    hinted = ("spatial_res" in req.hint_overrides
              or "temporal_res" in req.hint_overrides)
    class_assign = select_parameters(req, catalog, domain)
    epochs: dict[int, EpochSpec] = {}
    if hinted:
        epochs[1] = EpochSpec(1, class_assign, "full")
        return EpochPlan(epochs, refine_threshold)
    coarse = _assignment(req, catalog, domain.spatial_ladder[0],
                         domain.temporal_ladder[0], req.hint_overrides)
    epochs[1] = EpochSpec(1, coarse, "full")
    if class_assign.resolution_key() != coarse.resolution_key():
        rule = "full" if req.accuracy_class == POINT else "hot-cells"
        epochs[2] = EpochSpec(2, class_assign, rule)
    if auto_epoch3 and req.anchor_table is not None:
        fine_s = min(EPOCH3_RESOLUTIONS[0], class_assign.spatial_res)
        fine_t = min(EPOCH3_RESOLUTIONS[1], class_assign.temporal_res)
        fine = _assignment(req, catalog, domain.snap_spatial(fine_s),
                           domain.snap_temporal(fine_t), req.hint_overrides)
        if fine.resolution_key() != class_assign.resolution_key():
            epochs[3] = EpochSpec(3, fine, "hot-stations")
    return EpochPlan(epochs, refine_threshold)


def hot_cell_extent(field: GridField, threshold: float,
                    domain: Domain) -> list[BBox]:
    """Cells exceeding the threshold at any timestep, dilated by one cell."""
    from .gridstore.regions import mask_to_regions
    hot = field.values.max(axis=2) > threshold
    if not hot.any():
        return []
    dilated = np.zeros_like(hot)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            shifted = np.roll(np.roll(hot, di, axis=0), dj, axis=1)
            if di > 0:
                shifted[:di, :] = False
            elif di < 0:
                shifted[di:, :] = False
            if dj > 0:
                shifted[:, :dj] = False
            elif dj < 0:
                shifted[:, dj:] = False
            dilated |= shifted
    res = field.spatial_res
    boxes = []
    for (i0, i1, j0, j1, _, _) in mask_to_regions(dilated[:, :, None]):
        box = BBox(field.bbox.lat_min + i0 * res, field.bbox.lat_min + i1 * res,
                   field.bbox.lon_min + j0 * res, field.bbox.lon_min + j1 * res)
        clamped = domain.clamp(box)
        if clamped is not None:
            boxes.append(clamped)
    return boxes


# --- ensembles ------------------------------------------------------------------------------

def ensemble_combine(fields: list[GridField], weights: list[float]) -> GridField:
    if not fields:
        raise GeometryMismatch("no fields to combine")
    if len(fields) != len(weights):
        raise GeometryMismatch("weight count must match field count")
    first = fields[0]
    for f in fields[1:]:
        if (f.bbox != first.bbox or f.interval != first.interval
                or f.spatial_res != first.spatial_res
                or f.temporal_res != first.temporal_res):
            raise GeometryMismatch("fields do not share grid geometry")
    w = np.asarray(weights, dtype=float)
    if (w < 0).any():
        raise ZeroWeightSum("weights must be non-negative")
    total = w.sum()
    if total == 0:
        raise ZeroWeightSum("weights sum to zero")
    stacked = np.stack([f.values for f in fields])
    combined = np.tensordot(w / total, stacked, axes=(0, 0))
    return GridField(first.attribute, first.bbox, first.interval,
                     first.spatial_res, first.temporal_res, combined,
                     param_signature="ensemble(" + ",".join(
                         f.param_signature for f in fields) + ")",
                     value_kind=first.value_kind)


# --- explain ---------------------------------------------------------------------------------

def explain(plan: ExecutionPlan) -> str:
    lines = [f"plan epoch={plan.epoch} class={plan.requirement.accuracy_class} "
             f"res=({plan.assignment.spatial_res} deg, {plan.assignment.temporal_res} h)"]
    for i, s in enumerate(plan.steps, 1):
        if s.kind == "generate":
            boxes = " + ".join(
                f"({b.lat_min:.3f},{b.lat_max:.3f},{b.lon_min:.3f},{b.lon_max:.3f})"
                for b in s.extent)
            lines.append(
                f"  {i}. generate {s.simulator} -> {s.attribute[0]}.{s.attribute[1]}"
                f" extent={boxes} interval={s.interval}"
                f" est={s.estimate_s:.2f}s acc={s.estimate_accuracy:.3f}")
        elif s.kind == "aggregate":
            lines.append(f"  {i}. aggregate {s.attribute[0]}.{s.attribute[1]} "
                         f"to ({s.spatial_res} deg, {s.temporal_res} h) from finer data")
        elif s.kind == "ensemble":
            lines.append(f"  {i}. ensemble {s.attribute[0]}.{s.attribute[1]} "
                         f"over {', '.join(s.simulators)} weights={s.weights}")
        else:
            lines.append(f"  {i}. answer")
    return "\n".join(lines)
