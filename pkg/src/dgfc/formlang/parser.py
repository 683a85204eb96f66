"""Tokenizer and recursive-descent parser for form files."""
from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import FormSyntaxError
from .syntax import Assign, BinOp, Call, FormFile, Index, Name, Neg, Num, Restrict, Str

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r\f]+)
  | (?P<cont>\\[ \t]*(\#[^\n]*)?\n)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<number>(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<string>"[^"\n]*"|'[^'\n]*')
  | (?P<op>[()\[\],=+\-*/])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str) -> list:
    tokens = []
    line, line_start, pos, depth = 1, 0, 0, 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise FormSyntaxError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        col = pos - line_start + 1
        if kind in ("cont", "newline"):
            if kind == "newline" and depth == 0:
                tokens.append(Token("newline", text, line, col))
            line += 1
            line_start = m.end()
        elif kind == "op":
            if text in "([":
                depth += 1
            elif text in ")]":
                depth = max(0, depth - 1)
            tokens.append(Token(text, text, line, col))
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, text, line, col))
        pos = m.end()
    tokens.append(Token("newline", "", line, pos - line_start + 1))
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    # token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k=1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def expect(self, kind, what=None) -> Token:
        if self.tok.kind != kind:
            self.error(f"unexpected {self.describe(self.tok)}", [what or repr(kind)])
        return self.advance()

    def error(self, message, expected=()):
        raise FormSyntaxError(message, self.tok.line, self.tok.col, expected)

    @staticmethod
    def describe(tok):
        if tok.kind == "eof":
            return "end of file"
        if tok.kind == "newline":
            return "end of line"
        return repr(tok.text)

    # grammar
    def parse_file(self) -> FormFile:
        statements = []
        while self.tok.kind != "eof":
            if self.tok.kind == "newline":
                self.advance()
                continue
            statements.append(self.parse_statement())
        return FormFile(tuple(statements), self.source)

    def parse_statement(self) -> Assign:
        start = (self.tok.line, self.tok.col)
        if self.tok.kind == "(":
            self.advance()
            targets = [self.expect("name", "name").text]
            while self.tok.kind == ",":
                self.advance()
                targets.append(self.expect("name", "name").text)
            self.expect(")", "')'")
        elif self.tok.kind == "name":
            targets = [self.advance().text]
        else:
            self.error(f"unexpected {self.describe(self.tok)}", ["name", "'('"])
        self.expect("=", "'='")
        value = self.parse_expr()
        if self.tok.kind not in ("newline", "eof"):
            self.error(f"unexpected {self.describe(self.tok)}", ["'+'", "'-'", "'*'", "'/'", "end of line"])
        return Assign(tuple(targets), value, start)

    def parse_expr(self):
        node = self.parse_term()
        while self.tok.kind in ("+", "-"):
            op = self.advance()
            node = BinOp(op.text, node, self.parse_term(), (op.line, op.col))
        return node

    def parse_term(self):
        node = self.parse_unary()
        while self.tok.kind in ("*", "/"):
            op = self.advance()
            node = BinOp(op.text, node, self.parse_unary(), (op.line, op.col))
        return node

    def parse_unary(self):
        if self.tok.kind == "-":
            op = self.advance()
            return Neg(self.parse_unary(), (op.line, op.col))
        if self.tok.kind == "+":
            self.advance()
            return self.parse_unary()
        return self.parse_postfix()

    def parse_postfix(self):
        node = self.parse_primary()
        while True:
            if self.tok.kind == "(" and self.peek().kind == "string" \
                    and self.peek().text[1:-1] in ("+", "-") and self.peek(2).kind == ")":
                pos = (self.tok.line, self.tok.col)
                self.advance()
                side = self.advance().text[1:-1]
                self.advance()
                node = Restrict(node, side, pos)
            elif self.tok.kind == "(":
                if not isinstance(node, Name):
                    self.error("only named functions can be called", ["operator", "end of line"])
                pos = node.pos
                self.advance()
                args = []
                if self.tok.kind != ")":
                    args.append(self.parse_expr())
                    while self.tok.kind == ",":
                        self.advance()
                        args.append(self.parse_expr())
                self.expect(")", "')'")
                node = Call(node.id, tuple(args), pos)
            elif self.tok.kind == "[":
                pos = (self.tok.line, self.tok.col)
                self.advance()
                idx = self.expect("number", "integer index")
                if not re.fullmatch(r"\d+", idx.text):
                    raise FormSyntaxError("index must be an integer", idx.line, idx.col, ["integer index"])
                self.expect("]", "']'")
                node = Index(node, int(idx.text), pos)
            else:
                return node

    def parse_primary(self):
        t = self.tok
        pos = (t.line, t.col)
        if t.kind == "name":
            self.advance()
            return Name(t.text, pos)
        if t.kind == "number":
            self.advance()
            return Num(float(t.text), t.text, pos)
        if t.kind == "string":
            self.advance()
            return Str(t.text[1:-1], pos)
        if t.kind == "(":
            self.advance()
            node = self.parse_expr()
            self.expect(")", "')'")
            return node
        self.error(f"unexpected {self.describe(t)}", ["name", "number", "string", "'('"])


def parse(source_text: str) -> FormFile:
    """Parse form-file text into an untyped syntax tree."""
    return Parser(source_text).parse_file()
