"""Tokenizer for the SQL dialect.

Keywords are matched case-insensitively at parse time; the lexer just
emits IDENT tokens with positions.  ``--`` line comments are stripped.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import QlangSyntaxError

PUNCT = {
    "<=": "LE", ">=": "GE", "<>": "NE",
    "(": "LPAREN", ")": "RPAREN", ",": "COMMA", ";": "SEMI", ".": "DOT",
    "*": "STAR", "=": "EQ", "<": "LT", ">": "GT", "+": "PLUS", "-": "MINUS",
    "/": "SLASH",
}


@dataclass(frozen=True)
class Token:
    kind: str       # IDENT NUMBER STRING <punct kind> EOF
    text: str
    value: object
    pos: int
    line: int
    col: int

    @property
    def upper(self) -> str:
        return self.text.upper()


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def err(msg: str, at_line: int, at_col: int):
        raise QlangSyntaxError(at_line, at_col, msg)

    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1; line += 1; col = 1
            continue
        if ch in " \t\r":
            i += 1; col += 1
            continue
        if ch == "-" and i + 1 < n and source[i + 1] == "-":
            while i < n and source[i] != "\n":
                i += 1
            continue
        start, sline, scol = i, line, col
        if ch == "'":
            i += 1; col += 1
            buf = []
            while i < n and source[i] != "'":
                if source[i] == "\n":
                    err("unterminated string literal", sline, scol)
                buf.append(source[i])
                i += 1; col += 1
            if i >= n:
                err("unterminated string literal", sline, scol)
            i += 1; col += 1
            text = source[start:i]
            tokens.append(Token("STRING", text, "".join(buf), start, sline, scol))
            continue
        if ch in "0123456789":     # ASCII only: unicode digits crash int()
            j = i
            while j < n and source[j] in "0123456789":
                j += 1
            is_float = False
            if j < n and source[j] == "." and j + 1 < n and source[j + 1] in "0123456789":
                is_float = True
                j += 1
                while j < n and source[j] in "0123456789":
                    j += 1
            if j < n and source[j] in "eE":
                k = j + 1
                if k < n and source[k] in "+-":
                    k += 1
                if k < n and source[k] in "0123456789":
                    is_float = True
                    j = k
                    while j < n and source[j] in "0123456789":
                        j += 1
            text = source[i:j]
            value = float(text) if is_float else int(text)
            tokens.append(Token("NUMBER", text, value, start, sline, scol))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            tokens.append(Token("IDENT", text, text, start, sline, scol))
            col += j - i
            i = j
            continue
        two = source[i:i + 2]
        if two in PUNCT:
            tokens.append(Token(PUNCT[two], two, two, start, sline, scol))
            i += 2; col += 2
            continue
        if ch in PUNCT:
            tokens.append(Token(PUNCT[ch], ch, ch, start, sline, scol))
            i += 1; col += 1
            continue
        err(f"unexpected character {ch!r}", sline, scol)
    tokens.append(Token("EOF", "", None, n, line, col))
    return tokens
