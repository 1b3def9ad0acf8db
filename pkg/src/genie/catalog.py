"""System catalog: simulators, tables, virtual columns, dependency graph.

Candidate parameter domains are copied out of the adapters at
registration time so planning stays a pure catalog-plus-estimates
computation.  The catalog persists to one canonical JSON file.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (CyclicDependency, DuplicateSimulator, DuplicateTable,
                     NotVirtual, UnknownAdapter, UnknownDependency,
                     UnknownSimulator, UnknownTable)
from .qlang.ast import AlterAddVirtualStmt, CreateTableStmt, RegisterSimulatorStmt

CATALOG_FORMAT = "genie-catalog/1"


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    type_tag: str                       # REAL | INTEGER
    default: float | int | None
    candidates: tuple[float | int, ...]  # ordered coarse -> fine; () = engine-derived

    def coerce(self, value):
        return int(value) if self.type_tag == "INTEGER" else float(value)


@dataclass(frozen=True)
class SimulatorRegistration:
    name: str
    adapter_id: str
    parameters: tuple[ParameterSpec, ...]
    output_format: str

    def parameter(self, name: str) -> ParameterSpec | None:
        return next((p for p in self.parameters if p.name == name), None)

    def defaults(self) -> dict[str, float | int]:
        return {p.name: p.default for p in self.parameters if p.default is not None}


@dataclass(frozen=True)
class VirtualColumnDef:
    table: str
    column: str
    value_type: str
    simulators: tuple[str, ...]
    ensemble_method: str = "none"        # none | weighted_average
    weight_source: str | None = None
    depends_on: tuple[tuple[str, str], ...] = ()

    @property
    def attribute(self) -> tuple[str, str]:
        return (self.table, self.column)


@dataclass
class TableSchema:
    name: str
    columns: dict[str, str]                      # column -> declared type
    primary_key: str | None = None
    virtual: dict[str, VirtualColumnDef] = field(default_factory=dict)


class Catalog:
    def __init__(self, adapters=None, path: str | Path | None = None):
        """``adapters`` maps adapter ids to objects exposing
        ``parameter_candidates(name) -> list | None``."""
        self.adapters = adapters or {}
        self.path = Path(path) if path is not None else None
        self.simulators: dict[str, SimulatorRegistration] = {}
        self.tables: dict[str, TableSchema] = {}
        self._sim_order: list[str] = []
        self._vcol_order: list[tuple[str, str]] = []
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    # -- simulators -------------------------------------------------------

    def register_simulator(self, stmt: RegisterSimulatorStmt) -> SimulatorRegistration:
        adapter_id = Path(stmt.executable).name or stmt.executable
        if adapter_id not in self.adapters:
            raise UnknownAdapter(f"no adapter {adapter_id!r} for {stmt.name}")
        adapter = self.adapters[adapter_id]
        params = []
        for p in stmt.parameters:
            candidates = adapter.parameter_candidates(p.name)
            if candidates is None:
                candidates = (p.default,) if p.default is not None else ()
            if p.default is not None and p.default not in candidates:
                candidates = tuple(sorted(set(candidates) | {p.default}, reverse=True))
            params.append(ParameterSpec(p.name, p.type_tag, p.default,
                                        tuple(candidates)))
        reg = SimulatorRegistration(stmt.name, adapter_id, tuple(params),
                                    stmt.output_format)
        with self._lock:
            existing = self.simulators.get(stmt.name)
            if existing is not None:
                if existing == reg:
                    return existing     # idempotent re-registration
                raise DuplicateSimulator(stmt.name)
            self.simulators[stmt.name] = reg
            self._sim_order.append(stmt.name)
            self._save()
        return reg

    def simulator(self, name: str) -> SimulatorRegistration:
        reg = self.simulators.get(name)
        if reg is None:
            raise UnknownSimulator(name)
        return reg

    # -- tables -----------------------------------------------------------

    def create_table(self, stmt: CreateTableStmt) -> TableSchema:
        columns = {c.name: c.type_name for c in stmt.columns}
        pk = next((c.name for c in stmt.columns if c.primary_key), None)
        schema = TableSchema(stmt.name, columns, pk)
        with self._lock:
            existing = self.tables.get(stmt.name)
            if existing is not None:
                if existing.columns == columns and existing.primary_key == pk:
                    return existing
                raise DuplicateTable(stmt.name)
            self.tables[stmt.name] = schema
            self._save()
        return schema

    def table_schema(self, name: str) -> TableSchema | None:
        return self.tables.get(name)

    # -- virtual columns ----------------------------------------------------

    def add_virtual_column(self, stmt: AlterAddVirtualStmt) -> VirtualColumnDef:
        with self._lock:
            schema = self.tables.get(stmt.table)
            if schema is None:
                raise UnknownTable(stmt.table)
            for sim in stmt.simulators:
                if sim not in self.simulators:
                    raise UnknownSimulator(sim)
            for dep_table, dep_col in stmt.depends_on:
                dep_schema = self.tables.get(dep_table)
                if dep_schema is None or (dep_col not in dep_schema.columns
                                          and dep_col not in dep_schema.virtual):
                    raise UnknownDependency(f"{dep_table}.{dep_col}")
            vdef = VirtualColumnDef(
                stmt.table, stmt.column, stmt.value_type, tuple(stmt.simulators),
                stmt.ensemble_method or "none", stmt.ensemble_weights,
                tuple(stmt.depends_on))
            prior = schema.virtual.get(stmt.column)
            if prior == vdef:
                return prior
            schema.virtual[stmt.column] = vdef
            schema.columns.setdefault(stmt.column, stmt.value_type)
            if vdef.attribute not in self._vcol_order:
                self._vcol_order.append(vdef.attribute)
            cycle = self._find_cycle()
            if cycle is not None:
                del schema.virtual[stmt.column]
                self._vcol_order.remove(vdef.attribute)
                raise CyclicDependency(" -> ".join(f"{t}.{c}" for t, c in cycle))
            self._save()
        return vdef

    def virtual_column(self, table: str, column: str) -> VirtualColumnDef:
        schema = self.tables.get(table)
        if schema is None:
            raise UnknownTable(table)
        vdef = schema.virtual.get(column)
        if vdef is None:
            raise NotVirtual(f"{table}.{column}")
        return vdef

    def virtual_columns(self) -> list[VirtualColumnDef]:
        out = []
        for attr in self._vcol_order:
            schema = self.tables.get(attr[0])
            if schema and attr[1] in schema.virtual:
                out.append(schema.virtual[attr[1]])
        return out

    # -- dependency graph -----------------------------------------------------

    def _producers(self, vdef: VirtualColumnDef) -> list[VirtualColumnDef]:
        out = []
        for dep_table, dep_col in vdef.depends_on:
            schema = self.tables.get(dep_table)
            if schema is not None and dep_col in schema.virtual:
                out.append(schema.virtual[dep_col])
        return out

    def _find_cycle(self):
        WHITE, GREY, BLACK = 0, 1, 2
        state: dict[tuple[str, str], int] = {}
        stack_path: list[tuple[str, str]] = []

        def visit(vdef: VirtualColumnDef):
            attr = vdef.attribute
            state[attr] = GREY
            stack_path.append(attr)
            for prod in self._producers(vdef):
                s = state.get(prod.attribute, WHITE)
                if s == GREY:
                    return stack_path[stack_path.index(prod.attribute):] + [prod.attribute]
                if s == WHITE:
                    found = visit(prod)
                    if found:
                        return found
            stack_path.pop()
            state[attr] = BLACK
            return None

        for vdef in self.virtual_columns():
            if state.get(vdef.attribute, WHITE) == WHITE:
                found = visit(vdef)
                if found:
                    return found
        return None

    def topo_order(self, attribute: tuple[str, str]) -> list[tuple[VirtualColumnDef, SimulatorRegistration]]:
        """Producers before consumers for one target column; ties follow
        registration order; only virtual prerequisites appear."""
        vdef = self.virtual_column(*attribute)
        seen: set[tuple[str, str]] = set()
        out: list[VirtualColumnDef] = []

        def visit(v: VirtualColumnDef):
            if v.attribute in seen:
                return
            seen.add(v.attribute)
            producers = sorted(self._producers(v),
                               key=lambda p: self._vcol_order.index(p.attribute))
            for p in producers:
                visit(p)
            out.append(v)

        visit(vdef)
        return [(v, self.simulator(v.simulators[0])) for v in out]

    # -- persistence -------------------------------------------------------------

    def to_json(self) -> dict:
        sims = []
        for name in self._sim_order:
            r = self.simulators[name]
            sims.append({"name": r.name, "adapter_id": r.adapter_id,
                         "output_format": r.output_format,
                         "parameters": [{"name": p.name, "type": p.type_tag,
                                         "default": p.default,
                                         "candidates": list(p.candidates)}
                                        for p in r.parameters]})
        tables = []
        for name in sorted(self.tables):
            t = self.tables[name]
            tables.append({"name": t.name, "columns": t.columns,
                           "primary_key": t.primary_key})
        vcols = []
        for v in self.virtual_columns():
            vcols.append({"table": v.table, "column": v.column,
                          "value_type": v.value_type,
                          "simulators": list(v.simulators),
                          "ensemble_method": v.ensemble_method,
                          "weight_source": v.weight_source,
                          "depends_on": [list(d) for d in v.depends_on]})
        return {"format": CATALOG_FORMAT, "simulators": sims, "tables": tables,
                "virtual_columns": vcols}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    def _save(self) -> None:
        if self.path is None:
            return
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        tmp.write_text(self.dumps(), encoding="utf-8")
        tmp.replace(self.path)

    def _load(self) -> None:
        doc = json.loads(self.path.read_text(encoding="utf-8"))
        if doc.get("format") != CATALOG_FORMAT:
            raise UnknownAdapter(f"unsupported catalog format {doc.get('format')!r}")
        for s in doc["simulators"]:
            reg = SimulatorRegistration(
                s["name"], s["adapter_id"],
                tuple(ParameterSpec(p["name"], p["type"], p["default"],
                                    tuple(p["candidates"])) for p in s["parameters"]),
                s["output_format"])
            self.simulators[reg.name] = reg
            self._sim_order.append(reg.name)
        for t in doc["tables"]:
            self.tables[t["name"]] = TableSchema(t["name"], dict(t["columns"]),
                                                 t["primary_key"])
        for v in doc["virtual_columns"]:
            vdef = VirtualColumnDef(v["table"], v["column"], v["value_type"],
                                    tuple(v["simulators"]), v["ensemble_method"],
                                    v["weight_source"],
                                    tuple(tuple(d) for d in v["depends_on"]))
            self.tables[vdef.table].virtual[vdef.column] = vdef
            self._vcol_order.append(vdef.attribute)
