"""AST for the engine's SQL dialect.

Nodes are plain dataclasses; source spans are carried on every node but
excluded from equality so round-trip comparisons are structural.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Span:
    start: int      # byte offset, inclusive
    end: int        # byte offset, exclusive
    line: int
    col: int


@dataclass
class Node:
    span: Span | None = field(default=None, compare=False, repr=False, kw_only=True)


# --- expressions -------------------------------------------------------------

@dataclass
class ColumnRef(Node):
    table: str | None = None
    name: str = ""


@dataclass
class Literal(Node):
    value: object = None
    kind: str = "number"        # "number" | "string"


@dataclass
class Star(Node):
    pass


@dataclass
class FuncCall(Node):
    name: str = ""              # stored uppercase
    args: list = field(default_factory=list)


@dataclass
class BinaryOp(Node):
    op: str = ""
    left: object = None
    right: object = None


@dataclass
class BetweenExpr(Node):
    operand: object = None
    low: object = None
    high: object = None


@dataclass
class InExpr(Node):
    operand: object = None
    subquery: "SelectQuery | None" = None


@dataclass
class ScalarSubquery(Node):
    query: "SelectQuery | None" = None


AGGREGATES = ("AVG", "MAX", "MIN", "COUNT")

SPATIAL_FUNCS = ("ST_DWITHIN", "ST_INTERSECTS", "ST_DISTANCE")


def is_aggregate(expr) -> bool:
    return isinstance(expr, FuncCall) and expr.name in AGGREGATES


def contains_aggregate(expr) -> bool:
    if is_aggregate(expr):
        return True
    if isinstance(expr, FuncCall):
        return any(contains_aggregate(a) for a in expr.args)
    if isinstance(expr, BinaryOp):
        return contains_aggregate(expr.left) or contains_aggregate(expr.right)
    if isinstance(expr, BetweenExpr):
        return any(contains_aggregate(e) for e in (expr.operand, expr.low, expr.high))
    return False


def walk_expr(expr):
    """Yield every expression node in a tree (subqueries not descended)."""
    yield expr
    if isinstance(expr, FuncCall):
        for a in expr.args:
            yield from walk_expr(a)
    elif isinstance(expr, BinaryOp):
        yield from walk_expr(expr.left)
        yield from walk_expr(expr.right)
    elif isinstance(expr, BetweenExpr):
        yield from walk_expr(expr.operand)
        yield from walk_expr(expr.low)
        yield from walk_expr(expr.high)
    elif isinstance(expr, InExpr):
        yield from walk_expr(expr.operand)


# --- statements --------------------------------------------------------------

@dataclass
class ParameterDecl(Node):
    name: str = ""
    type_tag: str = "REAL"          # REAL | INTEGER
    default: float | int | None = None


@dataclass
class RegisterSimulatorStmt(Node):
    name: str = ""
    executable: str = ""
    parameters: list[ParameterDecl] = field(default_factory=list)
    output_format: str = ""


@dataclass
class ColumnDef(Node):
    name: str = ""
    type_name: str = ""
    type_arg: int | None = None
    primary_key: bool = False
    references: tuple[str, str] | None = None


@dataclass
class CreateTableStmt(Node):
    name: str = ""
    columns: list[ColumnDef] = field(default_factory=list)


@dataclass
class AlterAddVirtualStmt(Node):
    table: str = ""
    column: str = ""
    value_type: str = "REAL"
    simulators: list[str] = field(default_factory=list)
    ensemble_method: str | None = None
    ensemble_weights: str | None = None
    depends_on: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class TableRef(Node):
    name: str = ""
    alias: str | None = None


@dataclass
class Join(Node):
    table: TableRef | None = None
    condition: object = None


@dataclass
class SelectItem(Node):
    expr: object = None
    alias: str | None = None


@dataclass
class HintEntry(Node):
    key: str = ""
    scope: str | None = None        # simulator name for "sim.param" keys
    value: float | int | str = 0.0

    @property
    def full_key(self) -> str:
        return f"{self.scope}.{self.key}" if self.scope else self.key


@dataclass
class HintClause(Node):
    entries: list[HintEntry] = field(default_factory=list)

    def as_dict(self) -> dict[str, float | int | str]:
        return {e.full_key: e.value for e in self.entries}


@dataclass
class SelectQuery(Node):
    projections: list[SelectItem] = field(default_factory=list)
    from_tables: list[TableRef] = field(default_factory=list)
    joins: list[Join] = field(default_factory=list)
    where: object = None
    group_by: list[ColumnRef] = field(default_factory=list)
    having: object = None
    hint: HintClause | None = None


Statement = (RegisterSimulatorStmt, CreateTableStmt, AlterAddVirtualStmt, SelectQuery)


@dataclass
class Script(Node):
    statements: list = field(default_factory=list)
