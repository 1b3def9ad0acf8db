"""The SQL dialect: lexer, parser, AST, pretty-printer, binder."""

from . import ast
from .bind import Binding, BoundQuery, BoundTable, bind
from .parser import normalize_hint_value, parse, parse_expression, parse_statement
from .render import render, render_expr, render_statement

__all__ = ["ast", "parse", "parse_statement", "parse_expression", "render",
           "render_statement", "render_expr", "bind", "BoundQuery",
           "BoundTable", "Binding", "normalize_hint_value"]
