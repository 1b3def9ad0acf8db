"""Evaluate bound SELECTs against the store at a chosen read resolution.

Supported query shapes (they cover the bundled corpus and workloads):

* stored-only queries (no virtual columns);
* grid queries over one simulated table, optionally filtered by a
  timestamp BETWEEN window or value comparisons, with aggregates or a
  GROUP BY over the time column;
* stored-points JOIN grid via ST_DWithin (station analysis), grouped or
  raw, with HAVING and IN-subquery station filters;
* stored JOIN grid on an attribution equality column (fire join).

Grid rows exist per (cell, timestep) of the read field; the timestamp
value of a row is its bin start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import CoverageMiss, EngineError
from ..gridstore.field import GridField
from ..gridstore.geometry import (BBox, format_timestamp, hours_to_seconds,
                                  parse_timestamp, point_to_bbox_distance_m)
from ..qlang.ast import (AGGREGATES, BetweenExpr, BinaryOp, ColumnRef, FuncCall,
                         InExpr, Literal, ScalarSubquery, Star, is_aggregate)
from ..qlang.bind import BoundQuery
from ..qlang.render import render_expr

_OPS = {
    "=": lambda a, b: a == b,
    "<>": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


@dataclass
class GridSource:
    table: str
    alias: str | None
    field: GridField
    attribution: dict[str, object]      # e.g. source_fire_id -> fire id
    valid: object = None                # optional per-cell coverage mask

    def check_valid(self, i, j, tmask):
        if self.valid is not None and not self.valid[i, j, tmask].all():
            raise CoverageMiss(
                f"answer touched uncovered cells of {self.table} at ({i}, {j})")

    def check_all_valid(self):
        if self.valid is not None and not self.valid.all():
            raise CoverageMiss(f"answer requires full coverage of {self.table}")


class Evaluator:
    def __init__(self, bound: BoundQuery, store, fields: dict[tuple[str, str], GridField],
                 row_cap: int = 20000, attribution: dict | None = None,
                 valids: dict | None = None):
        self.bound = bound
        self.store = store
        self.fields = fields
        self.row_cap = row_cap
        self.attribution = attribution or {}
        self.valids = valids or {}

    # -- public -----------------------------------------------------------

    def run(self) -> list[dict]:
        q = self.bound.query
        grid_tables = [t for t in self.bound.tables if t.vdefs]
        stored_tables = [t for t in self.bound.tables if not t.vdefs]
        if not grid_tables:
            return self._stored_only(stored_tables)
        if len(grid_tables) != 1:
            raise EngineError("queries over multiple simulated tables are not supported")
        grid = self._grid_source(grid_tables[0])
        if not stored_tables:
            return self._grid_only(grid)
        if len(stored_tables) != 1:
            raise EngineError("at most one stored table join is supported")
        stored = stored_tables[0]
        cond = self._join_condition()
        if isinstance(cond, FuncCall) and cond.name == "ST_DWITHIN":
            return self._station_join(stored, grid, cond)
        if isinstance(cond, BinaryOp) and cond.op == "=":
            return self._attribution_join(stored, grid, cond)
        raise EngineError(f"unsupported join condition: {render_expr(cond)}")

    # -- helpers -------------------------------------------------------------

    def _grid_source(self, btable) -> GridSource:
        vcol = next(iter(btable.vdefs.values()))
        field = self.fields.get((btable.name, vcol.column))
        if field is None:
            raise EngineError(f"no materialized data for {btable.name}.{vcol.column}")
        src = GridSource(btable.name, btable.alias, field,
                         self.attribution.get(btable.name, {}))
        src.valid = self.valids.get((btable.name, vcol.column))
        return src

    def _join_condition(self):
        joins = self.bound.query.joins
        if len(joins) != 1:
            raise EngineError("exactly one JOIN is supported with a simulated table")
        return joins[0].condition

    # -- stored-only ------------------------------------------------------------

    def _stored_only(self, tables) -> list[dict]:
        if len(tables) != 1:
            raise EngineError("stored-only queries support a single table")
        t = tables[0]
        table = self.store.table(t.name)
        if table is None:
            return []
        rows = [dict(r) for r in table.rows]
        rows = [r for r in rows if self._row_predicate(r)]
        q = self.bound.query
        if any(is_aggregate(p.expr) for p in q.projections) and not q.group_by:
            out = {}
            for p in q.projections:
                name = p.alias or render_expr(p.expr)
                values = [self._scalar(r, p.expr.args[0]) for r in rows] \
                    if p.expr.args and not isinstance(p.expr.args[0], Star) \
                    else [1] * len(rows)
                out[name] = _aggregate(p.expr.name, values)
            return [out]
        return [self._project_row(r) for r in rows]

    def _row_predicate(self, row: dict) -> bool:
        where = self.bound.query.where
        return self._eval_bool(where, row) if where is not None else True

    def _eval_bool(self, expr, row) -> bool:
        if isinstance(expr, BinaryOp):
            if expr.op == "AND":
                return self._eval_bool(expr.left, row) and self._eval_bool(expr.right, row)
            if expr.op == "OR":
                return self._eval_bool(expr.left, row) or self._eval_bool(expr.right, row)
            left = self._scalar(row, expr.left)
            right = self._scalar(row, expr.right)
            return bool(_OPS[expr.op](left, right))
        if isinstance(expr, BetweenExpr):
            v = self._scalar(row, expr.operand)
            lo = self._scalar(row, expr.low)
            hi = self._scalar(row, expr.high)
            return lo <= v <= hi
        if isinstance(expr, InExpr):
            member = self._scalar(row, expr.operand)
            return member in self._subquery_values(expr)
        raise EngineError(f"unsupported predicate: {render_expr(expr)}")

    def _scalar(self, row, expr):
        if isinstance(expr, Literal):
            return expr.value
        if isinstance(expr, ColumnRef):
            if expr.name in row:
                return row[expr.name]
            raise EngineError(f"column {expr.name} not in row scope")
        if isinstance(expr, BinaryOp):
            left, right = self._scalar(row, expr.left), self._scalar(row, expr.right)
            return {"+": left + right, "-": left - right,
                    "*": left * right, "/": left / right}[expr.op]
        if isinstance(expr, ScalarSubquery):
            rows = Evaluator(_bind_sub(self.bound, expr.query), self.store,
                             self.fields, self.row_cap, self.attribution,
                             self.valids).run()
            if not rows:
                return None
            return next(iter(rows[0].values()))
        raise EngineError(f"unsupported expression: {render_expr(expr)}")

    def _project_row(self, row: dict) -> dict:
        out = {}
        for p in self.bound.query.projections:
            name = p.alias or render_expr(p.expr)
            out[name] = self._scalar(row, p.expr)
        return out

    def _subquery_values(self, expr: InExpr) -> set:
        sub = next((s for s in self.bound.subqueries
                    if s.query is expr.subquery), None)
        if sub is None:
            raise EngineError("unbound subquery")
        rows = Evaluator(sub, self.store, self.fields, self.row_cap,
                         self.attribution, self.valids).run()
        return {next(iter(r.values())) for r in rows}

    # -- grid-only ----------------------------------------------------------------

    def _grid_only(self, grid: GridSource) -> list[dict]:
        q = self.bound.query
        value_col = self._grid_value_column(grid)
        tmask, vpred = self._grid_filters(grid, value_col)
        field = grid.field
        starts = field.timestep_starts()
        grid.check_all_valid()
        has_agg = any(is_aggregate(p.expr) for p in q.projections)
        group_time = bool(q.group_by) and all(
            g.name.lower() == "timestamp" for g in q.group_by)
        if has_agg and not q.group_by:
            vals = field.values[:, :, tmask]
            sel = vals[vpred[:, :, tmask]] if vpred is not None else vals.reshape(-1)
            return [{(p.alias or render_expr(p.expr)):
                     _aggregate(p.expr.name, sel) for p in q.projections}]
        if has_agg and group_time:
            rows = []
            for t in np.nonzero(tmask)[0]:
                sl = field.values[:, :, t]
                sel = sl[vpred[:, :, t]] if vpred is not None else sl.reshape(-1)
                row = {}
                for p in q.projections:
                    name = p.alias or render_expr(p.expr)
                    if is_aggregate(p.expr):
                        row[name] = _aggregate(p.expr.name, sel)
                    elif isinstance(p.expr, ColumnRef) and p.expr.name.lower() == "timestamp":
                        row[name] = format_timestamp(int(starts[t]))
                    else:
                        raise EngineError("grouped projections must aggregate or key")
                rows.append(row)
            return rows
        if has_agg:
            raise EngineError("GROUP BY on non-temporal grid columns is not supported")
        # raw cell rows, capped
        rows = []
        for t in np.nonzero(tmask)[0]:
            for i in range(field.nlat):
                for j in range(field.nlon):
                    if vpred is not None and not vpred[i, j, t]:
                        continue
                    rows.append(self._grid_row(grid, value_col, i, j, t, starts))
                    if len(rows) >= self.row_cap:
                        return rows
        return rows

    def _grid_value_column(self, grid: GridSource) -> str:
        btable = next(t for t in self.bound.tables if t.name == grid.table)
        return next(iter(btable.vdefs))

    def _grid_filters(self, grid: GridSource, value_col: str):
        """(time mask, optional per-cell predicate mask) from WHERE."""
        field = grid.field
        starts = field.timestep_starts()
        tmask = np.ones(field.nt, dtype=bool)
        vpred = None

        def apply(expr):
            nonlocal tmask, vpred
            if expr is None:
                return
            if isinstance(expr, BinaryOp) and expr.op == "AND":
                apply(expr.left)
                apply(expr.right)
                return
            if isinstance(expr, BetweenExpr) and isinstance(expr.operand, ColumnRef) \
                    and expr.operand.name.lower() == "timestamp":
                lo = parse_timestamp(str(expr.low.value))
                hi = parse_timestamp(str(expr.high.value))
                tmask &= (starts >= lo) & (starts <= hi)
                return
            if isinstance(expr, BinaryOp) and isinstance(expr.left, ColumnRef) \
                    and expr.left.name == value_col and isinstance(expr.right, Literal):
                mask = _OPS[expr.op](grid.field.values, expr.right.value)
                vpred = mask if vpred is None else (vpred & mask)
                return
            if isinstance(expr, BinaryOp) and expr.op == "=" \
                    and isinstance(expr.left, ColumnRef) \
                    and expr.left.name in grid.attribution \
                    and isinstance(expr.right, Literal):
                if grid.attribution[expr.left.name] != expr.right.value:
                    tmask &= False
                return
            raise EngineError(f"unsupported grid predicate: {render_expr(expr)}")

        apply(self.bound.query.where)
        return tmask, vpred

    def _grid_row(self, grid: GridSource, value_col: str, i, j, t, starts) -> dict:
        out = {}
        field = grid.field
        for p in self.bound.query.projections:
            name = p.alias or render_expr(p.expr)
            expr = p.expr
            if isinstance(expr, ColumnRef):
                cname = expr.name.lower()
                if expr.name == value_col:
                    out[name] = float(field.values[i, j, t])
                elif cname == "timestamp":
                    out[name] = format_timestamp(int(starts[t]))
                elif cname == "grid_cell":
                    lat = field.bbox.lat_min + (i + 0.5) * field.spatial_res
                    lon = field.bbox.lon_min + (j + 0.5) * field.spatial_res
                    out[name] = [round(lat, 6), round(lon, 6)]
                elif expr.name in grid.attribution:
                    out[name] = grid.attribution[expr.name]
                else:
                    raise EngineError(f"unknown grid column {expr.name}")
            else:
                out[name] = self._scalar({}, expr)
        return out

    # -- station join -----------------------------------------------------------------

    def _station_join(self, stored, grid: GridSource, cond: FuncCall) -> list[dict]:
        q = self.bound.query
        radius = float(cond.args[2].value)
        table = self.store.table(stored.name)
        if table is None:
            raise EngineError(f"no rows ingested for {stored.name}")
        field = grid.field
        value_col = self._grid_value_column(grid)
        tmask, vpred = self._grid_filters_join(grid, value_col)
        starts = field.timestep_starts()

        lat_c = field.lat_centers()
        lon_c = field.lon_centers()
        cell_m_lat = field.spatial_res * 111320.0

        rows_out = []
        groups = []
        for srow in table.rows:
            if not self._stored_row_predicate(srow):
                continue
            slat, slon = float(srow["lat"]), float(srow["lon"])
            # candidate cells via bounding window, exact rect distance after
            dlat = (radius + cell_m_lat) / 111320.0
            dlon = dlat / max(math.cos(math.radians(slat)), 1e-6)
            ii = np.nonzero(np.abs(lat_c - slat) <= dlat + field.spatial_res)[0]
            jj = np.nonzero(np.abs(lon_c - slon) <= dlon + field.spatial_res)[0]
            cells = []
            for i in ii:
                for j in jj:
                    cell = BBox(field.bbox.lat_min + i * field.spatial_res,
                                field.bbox.lat_min + (i + 1) * field.spatial_res,
                                field.bbox.lon_min + j * field.spatial_res,
                                field.bbox.lon_min + (j + 1) * field.spatial_res)
                    if point_to_bbox_distance_m(slat, slon, cell) <= radius:
                        cells.append((int(i), int(j)))
            if not cells:
                continue
            groups.append((srow, cells))

        has_agg = any(is_aggregate(p.expr) for p in q.projections)
        if has_agg or q.group_by:
            for srow, cells in groups:
                sel = self._select_values(field, cells, tmask, vpred, grid)
                if sel.size == 0:
                    continue
                row = {}
                keep = True
                if q.having is not None:
                    keep = self._having(q.having, sel, srow)
                if not keep:
                    continue
                for p in q.projections:
                    name = p.alias or render_expr(p.expr)
                    if is_aggregate(p.expr):
                        row[name] = _aggregate(p.expr.name, sel)
                    else:
                        row[name] = self._scalar(srow, p.expr)
                rows_out.append(row)
            return rows_out
        # raw rows
        for srow, cells in groups:
            for (i, j) in cells:
                grid.check_valid(i, j, tmask)
                for t in np.nonzero(tmask)[0]:
                    if vpred is not None and not vpred[i, j, t]:
                        continue
                    row = {}
                    for p in q.projections:
                        name = p.alias or render_expr(p.expr)
                        expr = p.expr
                        if isinstance(expr, ColumnRef) and expr.name == value_col:
                            row[name] = float(field.values[i, j, t])
                        elif isinstance(expr, ColumnRef) and expr.name.lower() == "timestamp":
                            row[name] = format_timestamp(int(starts[t]))
                        elif isinstance(expr, ColumnRef) and expr.name.lower() == "grid_cell":
                            row[name] = [round(field.bbox.lat_min + (i + 0.5) * field.spatial_res, 6),
                                         round(field.bbox.lon_min + (j + 0.5) * field.spatial_res, 6)]
                        else:
                            row[name] = self._scalar(srow, expr)
                    rows_out.append(row)
                    if len(rows_out) >= self.row_cap:
                        return rows_out
        return rows_out

    def _grid_filters_join(self, grid: GridSource, value_col: str):
        # same WHERE handling, but station-column predicates are applied per row
        field = grid.field
        starts = field.timestep_starts()
        tmask = np.ones(field.nt, dtype=bool)
        vpred = None

        def apply(expr):
            nonlocal tmask, vpred
            if expr is None:
                return
            if isinstance(expr, BinaryOp) and expr.op == "AND":
                apply(expr.left)
                apply(expr.right)
                return
            if isinstance(expr, BetweenExpr) and isinstance(expr.operand, ColumnRef):
                lo = parse_timestamp(str(expr.low.value))
                hi = parse_timestamp(str(expr.high.value))
                tmask &= (starts >= lo) & (starts <= hi)
                return
            if isinstance(expr, BinaryOp) and isinstance(expr.left, ColumnRef) \
                    and expr.left.name == value_col and isinstance(expr.right, Literal):
                mask = _OPS[expr.op](field.values, expr.right.value)
                vpred = mask if vpred is None else (vpred & mask)
                return
            # anything else is a stored-row predicate handled per row
            return

        apply(self.bound.query.where)
        return tmask, vpred

    def _stored_row_predicate(self, srow: dict) -> bool:
        where = self.bound.query.where

        def check(expr) -> bool:
            if expr is None:
                return True
            if isinstance(expr, BinaryOp) and expr.op == "AND":
                return check(expr.left) and check(expr.right)
            if isinstance(expr, BinaryOp) and expr.op in _OPS:
                if isinstance(expr.left, ColumnRef) and expr.left.name in srow \
                        and isinstance(expr.right, Literal):
                    return bool(_OPS[expr.op](srow[expr.left.name], expr.right.value))
            if isinstance(expr, InExpr) and isinstance(expr.operand, ColumnRef) \
                    and expr.operand.name in srow:
                return srow[expr.operand.name] in self._subquery_values(expr)
            return True     # grid predicates handled elsewhere

        return check(where)

    def _select_values(self, field, cells, tmask, vpred, grid=None) -> np.ndarray:
        chunks = []
        for (i, j) in cells:
            if grid is not None:
                grid.check_valid(i, j, tmask)
            vals = field.values[i, j, tmask]
            if vpred is not None:
                vals = vals[vpred[i, j, tmask]]
            chunks.append(vals)
        return np.concatenate(chunks) if chunks else np.empty(0)

    def _having(self, expr, sel: np.ndarray, srow: dict) -> bool:
        if isinstance(expr, BinaryOp) and expr.op == "AND":
            return self._having(expr.left, sel, srow) and self._having(expr.right, sel, srow)
        if isinstance(expr, BinaryOp) and expr.op in _OPS:
            left = self._having_value(expr.left, sel, srow)
            right = self._having_value(expr.right, sel, srow)
            return bool(_OPS[expr.op](left, right))
        raise EngineError(f"unsupported HAVING: {render_expr(expr)}")

    def _having_value(self, expr, sel, srow):
        if is_aggregate(expr):
            return _aggregate(expr.name, sel)
        if isinstance(expr, Literal):
            return expr.value
        if isinstance(expr, ColumnRef):
            return self._scalar(srow, expr)
        raise EngineError(f"unsupported HAVING term: {render_expr(expr)}")

    # -- attribution join -----------------------------------------------------------

    def _attribution_join(self, stored, grid: GridSource, cond: BinaryOp) -> list[dict]:
        q = self.bound.query
        table = self.store.table(stored.name)
        if table is None:
            raise EngineError(f"no rows ingested for {stored.name}")
        refs = [e for e in (cond.left, cond.right) if isinstance(e, ColumnRef)]
        if len(refs) != 2:
            raise EngineError("attribution join must compare two columns")
        stored_col = next(r.name for r in refs
                          if self.bound.resolve(r).table == stored.name)
        grid_col = next(r.name for r in refs
                        if self.bound.resolve(r).table == grid.table)
        value_col = self._grid_value_column(grid)
        tmask, vpred = self._grid_filters_join(grid, value_col)
        field = grid.field
        rows_out = []
        for srow in table.rows:
            if grid.attribution.get(grid_col) != srow.get(stored_col):
                continue
            if not self._stored_row_predicate(srow):
                continue
            grid.check_all_valid()
            vals = field.values[:, :, tmask]
            sel = vals[vpred[:, :, tmask]] if vpred is not None else vals.reshape(-1)
            row = {}
            for p in q.projections:
                name = p.alias or render_expr(p.expr)
                if is_aggregate(p.expr):
                    row[name] = _aggregate(p.expr.name, sel)
                else:
                    row[name] = self._scalar(srow, p.expr)
            rows_out.append(row)
        return rows_out


def _aggregate(func: str, values) -> float:
    arr = np.asarray(values, dtype=float) if not isinstance(values, np.ndarray) \
        else values
    if func == "COUNT":
        return int(arr.size)
    if arr.size == 0:
        return float("nan")
    if func == "AVG":
        return float(arr.mean())
    if func == "MAX":
        return float(arr.max())
    if func == "MIN":
        return float(arr.min())
    raise EngineError(f"unsupported aggregate {func}")


def _bind_sub(bound: BoundQuery, query) -> BoundQuery:
    for s in bound.subqueries:
        if s.query is query:
            return s
    raise EngineError("scalar subquery was not bound")
