"""Typed form expressions produced by semantic checking.

Jumps and averages never appear here: checking rewrites them into sums of
restricted terms, so both kernel backends only see restrictions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

SIDES = ("+", "-")


class Expr:
    shape: tuple = ()

    @property
    def children(self) -> tuple:
        return ()


@dataclass(frozen=True)
class Argument(Expr):
    slot: int  # 0 = test, 1 = trial
    element: object

    @property
    def shape(self):
        return self.element.value_shape


@dataclass(frozen=True)
class Coefficient(Expr):
    name: str
    element: object

    @property
    def shape(self):
        return self.element.value_shape


@dataclass(frozen=True)
class FacetNormal(Expr):
    shape: tuple = (2,)


@dataclass(frozen=True)
class MeshSize(Expr):
    shape: tuple = ()


@dataclass(frozen=True)
class FacetIndicator(Expr):
    """Built-in ``of``: 1 on the outflow side of a facet, 0 on the other."""

    shape: tuple = ()


@dataclass(frozen=True)
class Constant(Expr):
    value: float
    shape: tuple = ()


@dataclass(frozen=True)
class Sum(Expr):
    a: Expr
    b: Expr

    @property
    def shape(self):
        return self.a.shape

    @property
    def children(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class Product(Expr):
    """Scalar times anything (``a`` is always the scalar)."""

    a: Expr
    b: Expr

    @property
    def shape(self):
        return self.b.shape

    @property
    def children(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class Division(Expr):
    a: Expr
    b: Expr

    @property
    def shape(self):
        return self.a.shape

    @property
    def children(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class Grad(Expr):
    a: Expr

    @property
    def shape(self):
        return self.a.shape + (2,)

    @property
    def children(self):
        return (self.a,)


@dataclass(frozen=True)
class Div(Expr):
    a: Expr

    @property
    def shape(self):
        return self.a.shape[:-1]

    @property
    def children(self):
        return (self.a,)


@dataclass(frozen=True)
class Dot(Expr):
    """Full contraction of two operands of equal shape."""

    a: Expr
    b: Expr
    shape: tuple = field(default=(), init=False)

    @property
    def children(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class MatVec(Expr):
    """Matrix-vector or matrix-matrix product (``mult`` of two tensors)."""

    a: Expr
    b: Expr

    @property
    def shape(self):
        return self.a.shape[:-1] + self.b.shape[1:]

    @property
    def children(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class Restricted(Expr):
    a: Expr
    side: str

    @property
    def shape(self):
        return self.a.shape

    @property
    def children(self):
        return (self.a,)


@dataclass(frozen=True)
class Indexed(Expr):
    a: Expr
    index: int

    @property
    def shape(self):
        return self.a.shape[1:]

    @property
    def children(self):
        return (self.a,)


@dataclass(frozen=True)
class ListVector(Expr):
    items: tuple

    @property
    def shape(self):
        return (len(self.items),) + self.items[0].shape

    @property
    def children(self):
        return self.items


def traverse(expr: Expr):
    yield expr
    for c in expr.children:
        yield from traverse(c)


def polynomial_degree(expr: Expr) -> int:
    """Polynomial degree of an integrand on an affine cell."""
    if isinstance(expr, (Argument, Coefficient)):
        return expr.element.degree
    if isinstance(expr, (FacetNormal, MeshSize, FacetIndicator, Constant)):
        return 0
    if isinstance(expr, (Product, Dot, MatVec)):
        return polynomial_degree(expr.a) + polynomial_degree(expr.b)
    if isinstance(expr, Division):
        return polynomial_degree(expr.a)
    if isinstance(expr, (Grad, Div)):
        return max(polynomial_degree(expr.a) - 1, 0)
    return max(polynomial_degree(c) for c in expr.children)


def max_derivative_order(expr: Expr) -> int:
    if isinstance(expr, (Grad, Div)):
        return 1 + max_derivative_order(expr.a)
    if not expr.children:
        return 0
    return max(max_derivative_order(c) for c in expr.children)


def coefficients(expr: Expr) -> dict:
    return {e.name: e.element for e in traverse(expr) if isinstance(e, Coefficient)}


def argument_slots(expr: Expr) -> set:
    return {e.slot for e in traverse(expr) if isinstance(e, Argument)}


def uses_indicator(expr: Expr) -> bool:
    return any(isinstance(e, FacetIndicator) for e in traverse(expr))
