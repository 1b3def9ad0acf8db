"""Recursive-descent parser for the SQL dialect.

Covers simulator registration DDL, CREATE TABLE, virtual-column ALTER,
and a SELECT subset: FROM/JOIN-ON, WHERE, GROUP BY, HAVING, and a
statement-final WITH HINT clause.  Subqueries appear as IN (...) members
or parenthesised scalar expressions.  Resolution hints normalize unit
suffixes ('1km', '6hr', '30min') to degrees and hours using
1 degree = 111.32 km.
"""

from __future__ import annotations

import re

from ..errors import QlangSyntaxError
from ..gridstore.geometry import KM_PER_DEG, M_PER_DEG
from .ast import (AGGREGATES, AlterAddVirtualStmt, BetweenExpr, BinaryOp,
                  ColumnDef, ColumnRef, CreateTableStmt, FuncCall, HintClause,
                  HintEntry, InExpr, Join, Literal, ParameterDecl,
                  RegisterSimulatorStmt, ScalarSubquery, Script, SelectItem,
                  SelectQuery, Span, Star, TableRef)
from .lexer import Token, tokenize

RESERVED = frozenset("""
SELECT FROM JOIN ON WHERE GROUP BY HAVING WITH HINT AND OR IN BETWEEN AS
REGISTER SIMULATOR SIMULATORS EXECUTABLE PARAMETERS OUTPUT_FORMAT
CREATE TABLE ALTER ADD COLUMN GENERATED ENSEMBLE METHOD WEIGHTS DEPENDS
DEFAULT PRIMARY KEY REFERENCES
""".split())

_UNIT_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+)\s*(km|m|hr|h|min)?\s*$", re.IGNORECASE)


def parse(text: str) -> Script:
    return _Parser(text).parse_script()


def parse_statement(text: str):
    parser = _Parser(text)
    stmt = parser.parse_one_statement()
    parser.expect_end()
    return stmt


def parse_expression(text: str):
    parser = _Parser(text)
    expr = parser.expression()
    parser.expect_end()
    return expr


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.i + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def at_kw(self, *words: str) -> bool:
        tok = self.peek()
        return tok.kind == "IDENT" and tok.upper in words

    def take_kw(self, *words: str) -> bool:
        if self.at_kw(*words):
            self.advance()
            return True
        return False

    def expect_kw(self, word: str) -> Token:
        if not self.at_kw(word):
            self.error(word)
        return self.advance()

    def expect(self, kind: str, what: str | None = None) -> Token:
        if self.peek().kind != kind:
            self.error(what or kind)
        return self.advance()

    def expect_end(self) -> None:
        if self.peek().kind != "EOF":
            self.error("end of input")

    def ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.kind != "IDENT" or tok.upper in RESERVED:
            self.error(what)
        return self.advance()

    def error(self, *expected: str):
        tok = self.peek()
        got = tok.text if tok.kind != "EOF" else "end of input"
        raise QlangSyntaxError(tok.line, tok.col,
                               f"expected {' | '.join(expected)}, got {got!r}",
                               expected=tuple(expected))

    def span_from(self, start_tok: Token) -> Span:
        prev = self.tokens[max(self.i - 1, 0)]
        return Span(start_tok.pos, prev.pos + len(prev.text), start_tok.line, start_tok.col)

    # -- statements ----------------------------------------------------------

    def parse_script(self) -> Script:
        start = self.peek()
        statements = []
        while self.peek().kind != "EOF":
            statements.append(self.parse_one_statement())
        return Script(statements, span=self.span_from(start))

    def parse_one_statement(self):
        tok = self.peek()
        if tok.kind != "IDENT":
            self.error("REGISTER", "CREATE", "ALTER", "SELECT")
        word = tok.upper
        if word == "REGISTER":
            stmt = self.register_simulator()
        elif word == "CREATE":
            stmt = self.create_table()
        elif word == "ALTER":
            stmt = self.alter_table()
        elif word == "SELECT":
            stmt = self.select_query()
        else:
            self.error("REGISTER", "CREATE", "ALTER", "SELECT")
        self.expect("SEMI", "';'")
        stmt.span = Span(stmt.span.start, self.tokens[self.i - 1].pos + 1,
                         stmt.span.line, stmt.span.col)
        return stmt

    def register_simulator(self) -> RegisterSimulatorStmt:
        start = self.expect_kw("REGISTER")
        self.expect_kw("SIMULATOR")
        name = self.ident("simulator name").text
        self.expect_kw("EXECUTABLE")
        executable = self.expect("STRING", "quoted executable path").value
        self.expect_kw("PARAMETERS")
        self.expect("LPAREN", "'('")
        params = [self.parameter_decl()]
        while self.peek().kind == "COMMA":
            self.advance()
            params.append(self.parameter_decl())
        self.expect("RPAREN", "')'")
        self.expect_kw("OUTPUT_FORMAT")
        output_format = self.ident("output format").text
        seen = set()
        for p in params:
            if p.name.lower() in seen:
                raise QlangSyntaxError(start.line, start.col,
                                       f"duplicate parameter {p.name!r}")
            seen.add(p.name.lower())
        return RegisterSimulatorStmt(name, executable, params, output_format,
                                     span=self.span_from(start))

    def parameter_decl(self) -> ParameterDecl:
        start = self.peek()
        name = self.ident("parameter name").text
        tok = self.peek()
        if not self.take_kw("REAL", "INTEGER"):
            self.error("REAL", "INTEGER")
        type_tag = tok.upper
        default = None
        if self.take_kw("DEFAULT"):
            neg = self.peek().kind == "MINUS"
            if neg:
                self.advance()
            num = self.expect("NUMBER", "number")
            default = -num.value if neg else num.value
            if type_tag == "INTEGER":
                default = int(default)
        return ParameterDecl(name, type_tag, default, span=self.span_from(start))

    def create_table(self) -> CreateTableStmt:
        start = self.expect_kw("CREATE")
        self.expect_kw("TABLE")
        name = self.ident("table name").text
        self.expect("LPAREN", "'('")
        columns = [self.column_def()]
        while self.peek().kind == "COMMA":
            self.advance()
            columns.append(self.column_def())
        self.expect("RPAREN", "')'")
        return CreateTableStmt(name, columns, span=self.span_from(start))

    def column_def(self) -> ColumnDef:
        start = self.peek()
        name = self.ident("column name").text
        type_name = self.ident("type name").text.upper()
        type_arg = None
        if self.peek().kind == "LPAREN":
            self.advance()
            type_arg = int(self.expect("NUMBER", "type length").value)
            self.expect("RPAREN", "')'")
        primary = False
        references = None
        while True:
            if self.take_kw("PRIMARY"):
                self.expect_kw("KEY")
                primary = True
            elif self.take_kw("REFERENCES"):
                ref_table = self.ident("referenced table").text
                self.expect("LPAREN", "'('")
                ref_col = self.ident("referenced column").text
                self.expect("RPAREN", "')'")
                references = (ref_table, ref_col)
            else:
                break
        return ColumnDef(name, type_name, type_arg, primary, references,
                         span=self.span_from(start))

    def alter_table(self) -> AlterAddVirtualStmt:
        start = self.expect_kw("ALTER")
        self.expect_kw("TABLE")
        table = self.ident("table name").text
        self.expect_kw("ADD")
        self.expect_kw("COLUMN")
        column = self.ident("column name").text
        value_type = self.ident("type name").text.upper()
        self.expect_kw("GENERATED")
        self.expect_kw("BY")
        simulators: list[str] = []
        if self.take_kw("SIMULATORS"):
            self.expect("LPAREN", "'('")
            simulators.append(self.ident("simulator name").text)
            while self.peek().kind == "COMMA":
                self.advance()
                simulators.append(self.ident("simulator name").text)
            self.expect("RPAREN", "')'")
        else:
            self.expect_kw("SIMULATOR")
            simulators.append(self.ident("simulator name").text)
        ensemble_method = None
        ensemble_weights = None
        depends: list[tuple[str, str]] = []
        while True:
            if self.take_kw("ENSEMBLE"):
                self.expect_kw("METHOD")
                ensemble_method = self.ident("ensemble method").text
            elif self.take_kw("WEIGHTS"):
                self.expect("LPAREN", "'('")
                ensemble_weights = self.ident("weight source").text
                self.expect("RPAREN", "')'")
            elif self.take_kw("DEPENDS"):
                self.expect_kw("ON")
                self.expect("LPAREN", "'('")
                depends.append(self.qualified_pair())
                while self.peek().kind == "COMMA":
                    self.advance()
                    depends.append(self.qualified_pair())
                self.expect("RPAREN", "')'")
            else:
                break
        if len(simulators) > 1 and ensemble_method is None:
            raise QlangSyntaxError(start.line, start.col,
                                   "multiple simulators require ENSEMBLE METHOD")
        return AlterAddVirtualStmt(table, column, value_type, simulators,
                                   ensemble_method, ensemble_weights, depends,
                                   span=self.span_from(start))

    def qualified_pair(self) -> tuple[str, str]:
        table = self.ident("table name").text
        self.expect("DOT", "'.'")
        column = self.ident("column name").text
        return (table, column)

    # -- SELECT ---------------------------------------------------------------

    def select_query(self) -> SelectQuery:
        start = self.expect_kw("SELECT")
        projections = [self.select_item()]
        while self.peek().kind == "COMMA":
            self.advance()
            projections.append(self.select_item())
        from_tables: list[TableRef] = []
        joins: list[Join] = []
        where = None
        group_by: list[ColumnRef] = []
        having = None
        hint = None
        if self.take_kw("FROM"):
            from_tables.append(self.table_ref())
            while self.peek().kind == "COMMA":
                self.advance()
                from_tables.append(self.table_ref())
            while self.at_kw("JOIN"):
                jstart = self.advance()
                table = self.table_ref()
                self.expect_kw("ON")
                cond = self.expression()
                joins.append(Join(table, cond, span=self.span_from(jstart)))
        if self.take_kw("WHERE"):
            where = self.expression()
        if self.take_kw("GROUP"):
            self.expect_kw("BY")
            group_by.append(self.column_ref())
            while self.peek().kind == "COMMA":
                self.advance()
                group_by.append(self.column_ref())
        if self.take_kw("HAVING"):
            having = self.expression()
        if self.take_kw("WITH"):
            self.expect_kw("HINT")
            hint = self.hint_clause()
        return SelectQuery(projections, from_tables, joins, where, group_by,
                           having, hint, span=self.span_from(start))

    def select_item(self) -> SelectItem:
        start = self.peek()
        expr = self.expression()
        alias = None
        if self.take_kw("AS"):
            alias = self.ident("alias").text
        elif (self.peek().kind == "IDENT" and self.peek().upper not in RESERVED):
            alias = self.advance().text
        return SelectItem(expr, alias, span=self.span_from(start))

    def table_ref(self) -> TableRef:
        start = self.peek()
        name = self.ident("table name").text
        alias = None
        if self.peek().kind == "IDENT" and self.peek().upper not in RESERVED:
            alias = self.advance().text
        return TableRef(name, alias, span=self.span_from(start))

    def column_ref(self) -> ColumnRef:
        start = self.peek()
        first = self.ident("column name").text
        if self.peek().kind == "DOT":
            self.advance()
            second = self.ident("column name").text
            return ColumnRef(first, second, span=self.span_from(start))
        return ColumnRef(None, first, span=self.span_from(start))

    def hint_clause(self) -> HintClause:
        start = self.expect("LPAREN", "'('")
        entries = [self.hint_entry()]
        while self.peek().kind == "COMMA":
            self.advance()
            entries.append(self.hint_entry())
        self.expect("RPAREN", "')'")
        seen = set()
        for e in entries:
            if e.full_key.lower() in seen:
                raise QlangSyntaxError(start.line, start.col,
                                       f"duplicate hint key {e.full_key!r}")
            seen.add(e.full_key.lower())
        return HintClause(entries, span=self.span_from(start))

    def hint_entry(self) -> HintEntry:
        start = self.peek()
        first = self.ident("hint key").text
        scope = None
        key = first
        if self.peek().kind == "DOT":
            self.advance()
            scope, key = first, self.ident("hint key").text
        self.expect("EQ", "'='")
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            raw: float | int | str = tok.value
        elif tok.kind == "STRING":
            self.advance()
            raw = tok.value
        else:
            self.error("number", "quoted value")
        value = normalize_hint_value(key, raw)
        return HintEntry(key, scope, value, span=self.span_from(start))

    # -- expressions ------------------------------------------------------------

    def expression(self):
        return self.or_expr()

    def or_expr(self):
        start = self.peek()
        left = self.and_expr()
        while self.at_kw("OR"):
            self.advance()
            right = self.and_expr()
            left = BinaryOp("OR", left, right, span=self.span_from(start))
        return left

    def and_expr(self):
        start = self.peek()
        left = self.comparison()
        while self.at_kw("AND"):
            self.advance()
            right = self.comparison()
            left = BinaryOp("AND", left, right, span=self.span_from(start))
        return left

    def comparison(self):
        start = self.peek()
        left = self.additive()
        tok = self.peek()
        if tok.kind in ("EQ", "NE", "LT", "LE", "GT", "GE"):
            op = {"EQ": "=", "NE": "<>", "LT": "<", "LE": "<=",
                  "GT": ">", "GE": ">="}[tok.kind]
            self.advance()
            right = self.additive()
            return BinaryOp(op, left, right, span=self.span_from(start))
        if self.at_kw("BETWEEN"):
            self.advance()
            low = self.additive()
            self.expect_kw("AND")
            high = self.additive()
            return BetweenExpr(left, low, high, span=self.span_from(start))
        if self.at_kw("IN"):
            self.advance()
            self.expect("LPAREN", "'('")
            sub = self.select_query()
            self.expect("RPAREN", "')'")
            return InExpr(left, sub, span=self.span_from(start))
        return left

    def additive(self):
        start = self.peek()
        left = self.multiplicative()
        while self.peek().kind in ("PLUS", "MINUS"):
            op = self.advance().text
            right = self.multiplicative()
            left = BinaryOp(op, left, right, span=self.span_from(start))
        return left

    def multiplicative(self):
        start = self.peek()
        left = self.unary()
        while self.peek().kind in ("STAR", "SLASH"):
            op = self.advance().text
            right = self.unary()
            left = BinaryOp(op, left, right, span=self.span_from(start))
        return left

    def unary(self):
        if self.peek().kind == "MINUS":
            start = self.advance()
            tok = self.peek()
            if tok.kind == "NUMBER":
                self.advance()
                return Literal(-tok.value, "number", span=self.span_from(start))
            inner = self.unary()
            return BinaryOp("-", Literal(0, "number"), inner, span=self.span_from(start))
        return self.primary()

    def primary(self):
        tok = self.peek()
        if tok.kind == "NUMBER":
            self.advance()
            return Literal(tok.value, "number", span=self.span_from(tok))
        if tok.kind == "STRING":
            self.advance()
            return Literal(tok.value, "string", span=self.span_from(tok))
        if tok.kind == "STAR":
            self.advance()
            return Star(span=self.span_from(tok))
        if tok.kind == "LPAREN":
            self.advance()
            if self.at_kw("SELECT"):
                sub = self.select_query()
                self.expect("RPAREN", "')'")
                return ScalarSubquery(sub, span=self.span_from(tok))
            inner = self.expression()
            self.expect("RPAREN", "')'")
            return inner
        if tok.kind == "IDENT" and tok.upper not in RESERVED:
            # function call or column reference
            if self.peek(1).kind == "LPAREN":
                self.advance()
                self.advance()
                args = []
                if self.peek().kind != "RPAREN":
                    args.append(self.expression())
                    while self.peek().kind == "COMMA":
                        self.advance()
                        args.append(self.expression())
                self.expect("RPAREN", "')'")
                return FuncCall(tok.upper, args, span=self.span_from(tok))
            return self.column_ref()
        self.error("expression")


def normalize_hint_value(key: str, raw: float | int | str):
    """Normalize resolution hints to degrees / hours; other keys pass through."""
    key_l = key.lower()
    if key_l.endswith("spatial_res"):
        if isinstance(raw, str):
            m = _UNIT_RE.match(raw)
            if m is None:
                return raw
            v, unit = float(m.group(1)), (m.group(2) or "").lower()
            if unit == "km":
                return v / KM_PER_DEG
            if unit == "m":
                return v / M_PER_DEG
            return v
        return float(raw)
    if key_l.endswith("temporal_res"):
        if isinstance(raw, str):
            m = _UNIT_RE.match(raw)
            if m is None:
                return raw
            v, unit = float(m.group(1)), (m.group(2) or "").lower()
            if unit == "min":
                return v / 60.0
            return v   # hr / h / bare are hours
        return float(raw)
    if key_l.endswith("particle_count") and not isinstance(raw, str):
        return int(raw)
    return raw
