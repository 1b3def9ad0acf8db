"""Canonical pretty-printer; parse(render(s)) is structurally s."""

from __future__ import annotations

from .ast import (AlterAddVirtualStmt, BetweenExpr, BinaryOp, ColumnRef,
                  CreateTableStmt, FuncCall, HintClause, InExpr, Join, Literal,
                  ParameterDecl, RegisterSimulatorStmt, ScalarSubquery, Script,
                  SelectQuery, Star)


def render(node) -> str:
    if isinstance(node, Script):
        return "\n\n".join(render_statement(s) for s in node.statements) + "\n"
    return render_statement(node)


def render_statement(stmt) -> str:
    if isinstance(stmt, RegisterSimulatorStmt):
        params = ",\n".join(f"    {_param(p)}" for p in stmt.parameters)
        return (f"REGISTER SIMULATOR {stmt.name}\n"
                f"  EXECUTABLE '{stmt.executable}'\n"
                f"  PARAMETERS (\n{params}\n  )\n"
                f"  OUTPUT_FORMAT {stmt.output_format};")
    if isinstance(stmt, CreateTableStmt):
        cols = ",\n".join(f"  {_column(c)}" for c in stmt.columns)
        return f"CREATE TABLE {stmt.name} (\n{cols}\n);"
    if isinstance(stmt, AlterAddVirtualStmt):
        out = [f"ALTER TABLE {stmt.table}",
               f"  ADD COLUMN {stmt.column} {stmt.value_type}"]
        if len(stmt.simulators) == 1:
            out.append(f"  GENERATED BY SIMULATOR {stmt.simulators[0]}")
        else:
            out.append(f"  GENERATED BY SIMULATORS ({', '.join(stmt.simulators)})")
        if stmt.ensemble_method:
            out.append(f"  ENSEMBLE METHOD {stmt.ensemble_method}")
        if stmt.ensemble_weights:
            out.append(f"  WEIGHTS ({stmt.ensemble_weights})")
        if stmt.depends_on:
            deps = ", ".join(f"{t}.{c}" for t, c in stmt.depends_on)
            out.append(f"  DEPENDS ON ({deps})")
        return "\n".join(out) + ";"
    if isinstance(stmt, SelectQuery):
        return _select(stmt) + ";"
    raise TypeError(f"cannot render {type(stmt).__name__}")


def _param(p: ParameterDecl) -> str:
    out = f"{p.name} {p.type_tag}"
    if p.default is not None:
        out += f" DEFAULT {_number(p.default)}"
    return out


def _column(c) -> str:
    out = f"{c.name} {c.type_name}"
    if c.type_arg is not None:
        out += f"({c.type_arg})"
    if c.primary_key:
        out += " PRIMARY KEY"
    if c.references is not None:
        out += f" REFERENCES {c.references[0]}({c.references[1]})"
    return out


def _select(q: SelectQuery, depth: int = 0) -> str:
    pad = "  " * depth
    lines = [pad + "SELECT " + ", ".join(_select_item(p) for p in q.projections)]
    if q.from_tables:
        lines.append(pad + "FROM " + ", ".join(_table(t) for t in q.from_tables))
    for j in q.joins:
        lines.append(pad + f"JOIN {_table(j.table)} ON {render_expr(j.condition)}")
    if q.where is not None:
        lines.append(pad + "WHERE " + render_expr(q.where))
    if q.group_by:
        lines.append(pad + "GROUP BY " + ", ".join(render_expr(c) for c in q.group_by))
    if q.having is not None:
        lines.append(pad + "HAVING " + render_expr(q.having))
    if q.hint is not None:
        lines.append(pad + "WITH HINT (" + ", ".join(
            f"{e.full_key}={_hint_value(e.value)}" for e in q.hint.entries) + ")")
    return "\n".join(lines)


def _select_item(item) -> str:
    out = render_expr(item.expr)
    if item.alias:
        out += f" AS {item.alias}"
    return out


def _table(t) -> str:
    return f"{t.name} {t.alias}" if t.alias else t.name


def _number(v) -> str:
    if isinstance(v, float) and v == int(v) and abs(v) < 1e15:
        return repr(v)    # keeps the trailing .0 so REAL defaults re-parse as floats
    return repr(v)


def _hint_value(v) -> str:
    if isinstance(v, str):
        return f"'{v}'"
    return _number(v)


def render_expr(e) -> str:
    if isinstance(e, Literal):
        return f"'{e.value}'" if e.kind == "string" else _number(e.value)
    if isinstance(e, Star):
        return "*"
    if isinstance(e, ColumnRef):
        return f"{e.table}.{e.name}" if e.table else e.name
    if isinstance(e, FuncCall):
        return f"{e.name}(" + ", ".join(render_expr(a) for a in e.args) + ")"
    if isinstance(e, BinaryOp):
        left, right = render_expr(e.left), render_expr(e.right)
        if _needs_parens(e.left, e.op, right_side=False):
            left = f"({left})"
        if _needs_parens(e.right, e.op, right_side=True):
            right = f"({right})"
        return f"{left} {e.op} {right}"
    if isinstance(e, BetweenExpr):
        return (f"{render_expr(e.operand)} BETWEEN {render_expr(e.low)}"
                f" AND {render_expr(e.high)}")
    if isinstance(e, InExpr):
        return f"{render_expr(e.operand)} IN (\n{_select(e.subquery, 1)}\n)"
    if isinstance(e, ScalarSubquery):
        return "(" + _select(e.query).replace("\n", " ") + ")"
    raise TypeError(f"cannot render expression {type(e).__name__}")


_PREC = {"OR": 0, "AND": 1, "=": 2, "<>": 2, "<": 2, "<=": 2, ">": 2, ">=": 2,
         "+": 3, "-": 3, "*": 4, "/": 4}


def _needs_parens(child, parent_op: str, right_side: bool) -> bool:
    # the grammar is left-associative: a right-hand child at equal
    # precedence must keep its parentheses to round-trip structurally
    if isinstance(child, (BetweenExpr, InExpr)):
        return True
    if not isinstance(child, BinaryOp):
        return False
    cp, pp = _PREC.get(child.op, 5), _PREC.get(parent_op, 5)
    return cp < pp or (right_side and cp == pp)
