"""Name resolution: every column becomes stored or virtual at bind time."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import AmbiguousColumn, BindError, UnknownColumn, UnknownTable
from .ast import (ColumnRef, InExpr, ScalarSubquery, SelectQuery,
                  contains_aggregate, is_aggregate, walk_expr)


@dataclass(frozen=True)
class Binding:
    table: str
    alias: str | None
    column: str
    kind: str                   # "stored" | "virtual"
    vdef: object = None         # catalog VirtualColumnDef when virtual


@dataclass
class BoundTable:
    name: str
    alias: str | None
    columns: dict[str, str]     # column -> kind
    vdefs: dict[str, object]    # virtual column -> definition


@dataclass
class BoundQuery:
    query: SelectQuery
    tables: list[BoundTable]
    virtual_columns: list[Binding] = field(default_factory=list)
    subqueries: list["BoundQuery"] = field(default_factory=list)

    def resolve(self, ref: ColumnRef) -> Binding:
        if ref.table is not None:
            for t in self.tables:
                if ref.table in (t.alias, t.name):
                    if ref.name not in t.columns:
                        raise UnknownColumn(f"{ref.table}.{ref.name}")
                    return Binding(t.name, t.alias, ref.name,
                                   t.columns[ref.name], t.vdefs.get(ref.name))
            raise UnknownTable(ref.table)
        hits = [t for t in self.tables if ref.name in t.columns]
        if not hits:
            raise UnknownColumn(ref.name)
        if len(hits) > 1:
            raise AmbiguousColumn(ref.name)
        t = hits[0]
        return Binding(t.name, t.alias, ref.name, t.columns[ref.name],
                       t.vdefs.get(ref.name))

    def table_for(self, name_or_alias: str) -> BoundTable | None:
        for t in self.tables:
            if name_or_alias in (t.alias, t.name):
                return t
        return None


def bind(query: SelectQuery, catalog, store) -> BoundQuery:
    """Resolve every referenced column against the catalog and store.

    ``catalog`` supplies declared table schemas and virtual column
    definitions; ``store`` supplies ingested tables (whose real column
    set may extend the declaration, e.g. lat/lon for geometry).
    """
    tables: list[BoundTable] = []
    refs = [(t.name, t.alias) for t in query.from_tables]
    refs += [(j.table.name, j.table.alias) for j in query.joins]
    for name, alias in refs:
        schema = catalog.table_schema(name) if catalog is not None else None
        stored = store.table(name) if store is not None else None
        if schema is None and stored is None:
            raise UnknownTable(name)
        columns: dict[str, str] = {}
        vdefs: dict[str, object] = {}
        if schema is not None:
            for col in schema.columns:
                columns[col] = "stored"
            for col, vdef in schema.virtual.items():
                columns[col] = "virtual"
                vdefs[col] = vdef
            if "location" in schema.columns:
                columns.setdefault("lat", "stored")
                columns.setdefault("lon", "stored")
        if stored is not None:
            for col in stored.columns:
                columns.setdefault(col, "stored")
        tables.append(BoundTable(name, alias, columns, vdefs))

    bound = BoundQuery(query, tables)

    exprs = [p.expr for p in query.projections]
    exprs += [j.condition for j in query.joins]
    if query.where is not None:
        exprs.append(query.where)
    exprs.extend(query.group_by)
    if query.having is not None:
        exprs.append(query.having)

    seen_virtual: set[tuple[str, str]] = set()
    for e in exprs:
        for node in walk_expr(e):
            if isinstance(node, ColumnRef):
                b = bound.resolve(node)
                if b.kind == "virtual" and (b.table, b.column) not in seen_virtual:
                    seen_virtual.add((b.table, b.column))
                    bound.virtual_columns.append(b)
            elif isinstance(node, InExpr):
                bound.subqueries.append(bind(node.subquery, catalog, store))
            elif isinstance(node, ScalarSubquery):
                bound.subqueries.append(bind(node.query, catalog, store))

    _check_aggregates(query)
    return bound


def _check_aggregates(query: SelectQuery) -> None:
    has_agg = any(contains_aggregate(p.expr) for p in query.projections)
    if has_agg and not query.group_by:
        plain = [p for p in query.projections if not is_aggregate(p.expr)]
        if plain:
            raise BindError(
                "aggregates without GROUP BY must be the only projections")
    if query.having is not None and not query.group_by:
        raise BindError("HAVING requires GROUP BY")
