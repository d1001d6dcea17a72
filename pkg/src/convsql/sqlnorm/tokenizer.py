"""SQL tokenizer for the SELECT-statement subset.

Comments are dropped; string literals keep their unquoted text; quoted
identifiers ("...", `...`, [...]) are tagged as names.
"""

from __future__ import annotations

from dataclasses import dataclass


class ParseError(Exception):
    def __init__(self, position: int, message: str):
        self.position = position
        self.message = message
        super().__init__(f"at offset {position}: {message}")


# token kinds
NAME = "name"       # bare or quoted identifier / keyword
NUMBER = "number"
STRING = "string"
OP = "op"           # operators and punctuation
PARAM = "param"     # ? placeholder
EOF = "eof"


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int

    def lower(self) -> str:
        return self.text.lower()


_TWO_CHAR_OPS = ("<>", "!=", "<=", ">=", "==", "||")
_ONE_CHAR_OPS = "+-*/%<>=(),.;"


def tokenize(sql: str) -> list[Token]:
    """Split SQL text into tokens; raises ParseError on unterminated literals."""
    out: list[Token] = []
    i, n = 0, len(sql)
    while i < n:
        ch = sql[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "-" and sql.startswith("--", i):
            j = sql.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if ch == "/" and sql.startswith("/*", i):
            j = sql.find("*/", i + 2)
            if j < 0:
                raise ParseError(i, "unterminated block comment")
            i = j + 2
            continue
        if ch == "'":
            text, i = _scan_quoted(sql, i, "'", doubling=True)
            out.append(Token(STRING, text, i))
            continue
        if ch == '"':
            text, i = _scan_quoted(sql, i, '"', doubling=True)
            out.append(Token(NAME, text, i))
            continue
        if ch == "`":
            text, i = _scan_quoted(sql, i, "`", doubling=True)
            out.append(Token(NAME, text, i))
            continue
        if ch == "[":
            j = sql.find("]", i + 1)
            if j < 0:
                raise ParseError(i, "unterminated [identifier]")
            out.append(Token(NAME, sql[i + 1:j], i))
            i = j + 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and sql[i + 1].isdigit()):
            j = i
            seen_dot = False
            seen_exp = False
            while j < n:
                c = sql[j]
                if c.isdigit():
                    j += 1
                elif c == "." and not seen_dot and not seen_exp:
                    seen_dot = True
                    j += 1
                elif c in "eE" and not seen_exp and j + 1 < n and (
                        sql[j + 1].isdigit() or (sql[j + 1] in "+-" and j + 2 < n
                                                 and sql[j + 2].isdigit())):
                    seen_exp = True
                    j += 2 if sql[j + 1] in "+-" else 1
                else:
                    break
            out.append(Token(NUMBER, sql[i:j], i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (sql[j].isalnum() or sql[j] == "_"):
                j += 1
            out.append(Token(NAME, sql[i:j], i))
            i = j
            continue
        if ch == "?":
            out.append(Token(PARAM, "?", i))
            i += 1
            continue
        two = sql[i:i + 2]
        if two in _TWO_CHAR_OPS:
            out.append(Token(OP, two, i))
            i += 2
            continue
        if ch in _ONE_CHAR_OPS:
            out.append(Token(OP, ch, i))
            i += 1
            continue
        raise ParseError(i, f"unexpected character {ch!r}")
    out.append(Token(EOF, "", n))
    return out


def _scan_quoted(sql: str, start: int, quote: str, doubling: bool) -> tuple[str, int]:
    i = start + 1
    parts: list[str] = []
    n = len(sql)
    while i < n:
        ch = sql[i]
        if ch == quote:
            if doubling and i + 1 < n and sql[i + 1] == quote:
                parts.append(quote)
                i += 2
                continue
            return "".join(parts), i + 1
        parts.append(ch)
        i += 1
    raise ParseError(start, f"unterminated {quote}-quoted literal")


def has_outer_order_by(sql: str) -> bool:
    """True when the statement carries an ORDER BY at parenthesis depth zero.

    Total on any text: tokenization failures report False.
    """
    try:
        toks = tokenize(sql)
    except ParseError:
        return False
    depth = 0
    for k, tok in enumerate(toks):
        if tok.kind == OP and tok.text == "(":
            depth += 1
        elif tok.kind == OP and tok.text == ")":
            depth -= 1
        elif (depth == 0 and tok.kind == NAME and tok.lower() == "order"
              and toks[k + 1].kind == NAME and toks[k + 1].lower() == "by"):
            return True
    return False
