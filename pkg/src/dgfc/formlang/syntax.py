"""Untyped syntax tree of form files, plus a printer that reparses identically."""
from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Node:
    pass


@dataclass(frozen=True)
class Num(Node):
    value: float
    text: str = field(default="", compare=False)
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Str(Node):
    value: str
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Name(Node):
    id: str
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Call(Node):
    func: str
    args: tuple
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Restrict(Node):
    operand: Node
    side: str
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Index(Node):
    operand: Node
    index: int
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Neg(Node):
    operand: Node
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class Assign:
    targets: tuple
    value: Node
    pos: tuple = field(default=None, compare=False)


@dataclass(frozen=True)
class FormFile:
    statements: tuple
    source: str = field(default="", compare=False)

    def names(self):
        return [t for s in self.statements for t in s.targets]

    def lookup(self, name):
        for s in reversed(self.statements):
            if name in s.targets:
                return s
        return None


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def format_expr(node: Node, parent_prec: int = 0, right: bool = False) -> str:
    if isinstance(node, Num):
        return node.text or repr(node.value)
    if isinstance(node, Str):
        return '"' + node.value + '"'
    if isinstance(node, Name):
        return node.id
    if isinstance(node, Call):
        return f"{node.func}({', '.join(format_expr(a) for a in node.args)})"
    if isinstance(node, Restrict):
        return f"{format_expr(node.operand, 4)}('{node.side}')"
    if isinstance(node, Index):
        return f"{format_expr(node.operand, 4)}[{node.index}]"
    if isinstance(node, Neg):
        text = "-" + format_expr(node.operand, 3)
        return f"({text})" if parent_prec >= 2 else text
    if isinstance(node, BinOp):
        prec = _PREC[node.op]
        text = f"{format_expr(node.left, prec)} {node.op} {format_expr(node.right, prec, True)}"
        if prec < parent_prec or (right and prec == parent_prec) or parent_prec == 4:
            return f"({text})"
        return text
    raise TypeError(f"cannot format {node!r}")


def format_file(ff: FormFile) -> str:
    lines = []
    for s in ff.statements:
        target = s.targets[0] if len(s.targets) == 1 else "(" + ", ".join(s.targets) + ")"
        lines.append(f"{target} = {format_expr(s.value)}")
    return "\n".join(lines) + "\n"
