"""Semantic checking: resolve names, type expressions, split forms into integrals."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import (
    RankError,
    RestrictionError,
    SemanticError,
    ShapeMismatch,
    UnknownIdentifier,
    UnsupportedExpression,
)
from ..refelem import LagrangeElement, MixedElement, make_lagrange
from . import exprs as E
from .syntax import BinOp, Call, FormFile, Index, Name, Neg, Num, Restrict, Str

MEASURES = ("dx", "ds", "dS")
FAMILY_NAMES = ("Lagrange", "Discontinuous Lagrange")


@dataclass(frozen=True)
class Integral:
    measure: str
    integrand: E.Expr


@dataclass(frozen=True)
class Form:
    name: str
    integrals: tuple
    rank: int
    elements: tuple  # element per argument slot
    coefficients: tuple  # ((name, element), ...) sorted by name

    @property
    def measures(self) -> tuple:
        return tuple(m for m in MEASURES if any(i.measure == m for i in self.integrals))

    def integrals_for(self, measure: str) -> tuple:
        return tuple(i for i in self.integrals if i.measure == measure)

    @property
    def coefficient_elements(self) -> dict:
        return dict(self.coefficients)


@dataclass(frozen=True)
class TypedFormFile:
    elements: dict = field(hash=False)
    forms: dict = field(hash=False)
    constants: dict = field(hash=False)

    def __getitem__(self, name) -> Form:
        return self.forms[name]


def _where(node):
    pos = getattr(node, "pos", None)
    return f"{pos[0]}:{pos[1]}: " if pos else ""


class Checker:
    def __init__(self, ff: FormFile, elements=None, constants=None):
        self.ff = ff
        self.element_overrides = dict(elements or {})
        self.constant_overrides = dict(constants or {})
        self.elements = {}
        self.symbols = {"of": E.FacetIndicator()}
        self.raw = {}  # named expressions, expanded on use
        self.constants = {}
        self.forms = {}

    def run(self) -> TypedFormFile:
        for stmt in self.ff.statements:
            self.statement(stmt)
        return TypedFormFile(self.elements, self.forms, self.constants)

    # declarations ---------------------------------------------------------
    def statement(self, stmt):
        v = stmt.value
        targets = stmt.targets
        for t in targets:
            if t in MEASURES:
                raise SemanticError(f"{_where(stmt)}cannot assign to measure {t!r}")
        if isinstance(v, Call) and v.func in ("FiniteElement", "VectorElement"):
            self.single(targets, stmt)
            self.declare_element(targets[0], self.element_decl(v))
        elif isinstance(v, BinOp) and v.op == "+" and isinstance(v.left, Name) \
                and isinstance(v.right, Name) and v.left.id in self.elements \
                and v.right.id in self.elements:
            self.single(targets, stmt)
            subs = (self.elements[v.left.id], self.elements[v.right.id])
            self.declare_element(targets[0], MixedElement(subs))
        elif isinstance(v, Call) and v.func in ("TestFunction", "TrialFunction", "Function"):
            self.single(targets, stmt)
            element = self.element_arg(v)
            name = targets[0]
            if v.func == "Function":
                self.symbols[name] = E.Coefficient(name, element)
            else:
                self.symbols[name] = E.Argument(0 if v.func == "TestFunction" else 1, element)
            self.raw.pop(name, None)
        elif isinstance(v, Call) and v.func in ("TestFunctions", "TrialFunctions"):
            element = self.element_arg(v)
            if not isinstance(element, MixedElement):
                raise SemanticError(f"{_where(v)}{v.func} needs a mixed element")
            if len(targets) != len(element.elements):
                raise SemanticError(
                    f"{_where(stmt)}{v.func} yields {len(element.elements)} functions, "
                    f"{len(targets)} names given")
            arg = E.Argument(0 if v.func == "TestFunctions" else 1, element)
            for name, (sub, _, c0) in zip(targets, element.sub_elements):
                if sub.value_size == 1:
                    self.symbols[name] = E.Indexed(arg, c0)
                else:
                    self.symbols[name] = E.ListVector(
                        tuple(E.Indexed(arg, c0 + i) for i in range(sub.value_size)))
                self.raw.pop(name, None)
        elif isinstance(v, Call) and v.func in ("FacetNormal", "MeshSize"):
            self.single(targets, stmt)
            self.check_cell(v)
            self.symbols[targets[0]] = E.FacetNormal() if v.func == "FacetNormal" else E.MeshSize()
            self.raw.pop(targets[0], None)
        else:
            self.single(targets, stmt)
            name = targets[0]
            if self.contains_measure(v):
                self.forms[name] = self.form(name, v)
            else:
                if isinstance(v, Num) or (isinstance(v, Neg) and isinstance(v.operand, Num)):
                    value = v.value if isinstance(v, Num) else -v.operand.value
                    value = float(self.constant_overrides.get(name, value))
                    self.constants[name] = value
                    self.symbols[name] = E.Constant(value)
                    self.raw.pop(name, None)
                else:
                    self.symbols.pop(name, None)
                    self.raw[name] = v

    def single(self, targets, stmt):
        if len(targets) != 1:
            raise SemanticError(f"{_where(stmt)}expected a single name on the left-hand side")

    def declare_element(self, name, element):
        override = self.element_overrides.get(name)
        if isinstance(override, int):
            if isinstance(element, MixedElement):
                raise SemanticError(f"cannot override the degree of mixed element {name!r}")
            element = make_lagrange(element.family, override, element.value_shape)
        elif override is not None:
            element = override
        self.elements[name] = element

    def check_cell(self, call):
        if not call.args or not isinstance(call.args[0], Str):
            raise SemanticError(f"{_where(call)}{call.func} expects a cell name string")
        if call.args[0].value != "triangle":
            raise UnsupportedExpression(f"{_where(call)}only 'triangle' cells are supported, "
                                        f"got {call.args[0].value!r}")

    def element_decl(self, call):
        if len(call.args) != 3 or not isinstance(call.args[0], Str) \
                or not isinstance(call.args[1], Str) or not isinstance(call.args[2], Num):
            raise SemanticError(f"{_where(call)}{call.func}(family, cell, degree) expected")
        family, cell, degree = call.args[0].value, call.args[1].value, call.args[2].value
        if family not in FAMILY_NAMES:
            raise SemanticError(f"{_where(call)}unknown element family {family!r}")
        if cell != "triangle":
            raise UnsupportedExpression(f"{_where(call)}only 'triangle' cells are supported, got {cell!r}")
        if degree != int(degree):
            raise SemanticError(f"{_where(call)}element degree must be an integer")
        shape = (2,) if call.func == "VectorElement" else ()
        return make_lagrange(family, int(degree), shape)

    def element_arg(self, call):
        if len(call.args) != 1 or not isinstance(call.args[0], Name):
            raise SemanticError(f"{_where(call)}{call.func} expects an element name")
        name = call.args[0].id
        if name not in self.elements:
            raise UnknownIdentifier(f"{_where(call.args[0])}unknown element {name!r}")
        return self.elements[name]

    # forms ------------------------------------------------------------------
    def contains_measure(self, node, seen=()) -> bool:
        if isinstance(node, Name):
            if node.id in MEASURES:
                return True
            if node.id in self.raw and node.id not in seen:
                return self.contains_measure(self.raw[node.id], seen + (node.id,))
            return False
        for child in _syntax_children(node):
            if self.contains_measure(child, seen):
                return True
        return False

    def split(self, node, sign=1.0):
        """Yield (sign, measure, integrand syntax) for a sum of measure-tagged terms."""
        if isinstance(node, BinOp) and node.op in "+-":
            yield from self.split(node.left, sign)
            yield from self.split(node.right, sign if node.op == "+" else -sign)
        elif isinstance(node, Neg):
            yield from self.split(node.operand, -sign)
        elif isinstance(node, BinOp) and node.op == "*" and isinstance(node.right, Name) \
                and node.right.id in MEASURES:
            if self.contains_measure(node.left):
                raise SemanticError(f"{_where(node)}a measure may appear only once per term")
            yield sign, node.right.id, node.left
        elif isinstance(node, Name) and node.id in self.raw:
            yield from self.split(self.raw[node.id], sign)
        else:
            raise SemanticError(f"{_where(node)}each term of a form must end with *dx, *ds or *dS")

    def form(self, name, node) -> Form:
        integrals = []
        for sign, measure, raw in self.split(node):
            integrand = self.convert(raw, measure)
            if sign < 0:
                integrand = E.Product(E.Constant(-1.0), integrand)
            if integrand.shape != ():
                raise ShapeMismatch(f"{_where(raw)}integrand must be scalar, has shape {integrand.shape}")
            validate_restrictions(integrand, measure)
            integrals.append(Integral(measure, integrand))
        slot_sets = [frozenset(linear_arguments(i.integrand)) for i in integrals]
        slots = set().union(*slot_sets)
        if any(s != slots for s in slot_sets):
            raise SemanticError(f"form {name!r}: integrals do not share the same arguments")
        if slots not in (set(), {0}, {0, 1}):
            raise RankError(f"form {name!r}: arguments {sorted(slots)} do not form a valid rank "
                            f"(a trial function needs a test function)")
        elements = []
        for slot in sorted(slots):
            found = {e.element for i in integrals for e in E.traverse(i.integrand)
                     if isinstance(e, E.Argument) and e.slot == slot}
            if len(found) != 1:
                raise SemanticError(f"form {name!r}: argument {slot} uses more than one element")
            elements.append(found.pop())
        coefs = {}
        for i in integrals:
            coefs.update(E.coefficients(i.integrand))
        return Form(name, tuple(integrals), len(slots), tuple(elements), tuple(sorted(coefs.items())))

    # expressions --------------------------------------------------------------
    def convert(self, node, measure, seen=()):
        c = lambda n: self.convert(n, measure, seen)  # noqa: E731
        if isinstance(node, Num):
            return E.Constant(node.value)
        if isinstance(node, Name):
            if node.id in MEASURES:
                raise SemanticError(f"{_where(node)}measure {node.id!r} used inside an integrand")
            if node.id in self.symbols:
                return self.symbols[node.id]
            if node.id in self.raw:
                if node.id in seen:
                    raise SemanticError(f"{_where(node)}recursive definition of {node.id!r}")
                return self.convert(self.raw[node.id], measure, seen + (node.id,))
            if node.id in self.elements:
                raise SemanticError(f"{_where(node)}element {node.id!r} used as a value")
            raise UnknownIdentifier(f"{_where(node)}unknown identifier {node.id!r}")
        if isinstance(node, Neg):
            return E.Product(E.Constant(-1.0), c(node.operand))
        if isinstance(node, BinOp):
            a, b = c(node.left), c(node.right)
            if node.op in "+-":
                if a.shape != b.shape:
                    raise ShapeMismatch(f"{_where(node)}cannot add shapes {a.shape} and {b.shape}")
                return E.Sum(a, b if node.op == "+" else E.Product(E.Constant(-1.0), b))
            if node.op == "*":
                return scalar_product(a, b, node)
            if b.shape != ():
                raise ShapeMismatch(f"{_where(node)}division by a non-scalar of shape {b.shape}")
            return E.Division(a, b)
        if isinstance(node, Restrict):
            if measure != "dS":
                raise RestrictionError(f"{_where(node)}restriction ('{node.side}') outside an "
                                       f"interior facet integral")
            return E.Restricted(c(node.operand), node.side)
        if isinstance(node, Index):
            a = c(node.operand)
            if a.shape == () or node.index >= a.shape[0]:
                raise ShapeMismatch(f"{_where(node)}index {node.index} out of range for shape {a.shape}")
            return E.Indexed(a, node.index)
        if isinstance(node, Call):
            return self.call(node, measure, c)
        if isinstance(node, Str):
            raise SemanticError(f"{_where(node)}string {node.value!r} used as a value")
        raise UnsupportedExpression(f"{_where(node)}unsupported expression")

    def call(self, node, measure, c):
        f, args = node.func, node.args
        nargs = {"dot": (2,), "mult": (2,), "grad": (1,), "div": (1,), "jump": (1, 2), "avg": (1,)}
        if f == "curl":
            raise UnsupportedExpression(f"{_where(node)}curl is not supported")
        if f not in nargs:
            raise UnknownIdentifier(f"{_where(node)}unknown function {f!r}")
        if len(args) not in nargs[f]:
            raise SemanticError(f"{_where(node)}{f} takes {nargs[f]} arguments, got {len(args)}")
        ops = [c(a) for a in args]
        if f == "dot":
            a, b = ops
            if a.shape != b.shape:
                raise ShapeMismatch(f"{_where(node)}dot of shapes {a.shape} and {b.shape}")
            return E.Dot(a, b)
        if f == "mult":
            a, b = ops
            if a.shape == ():
                return E.Product(a, b)
            if b.shape == ():
                return E.Product(b, a)
            if len(a.shape) == 2 and b.shape[0] == a.shape[1]:
                return E.MatVec(a, b)
            raise ShapeMismatch(f"{_where(node)}mult of shapes {a.shape} and {b.shape}")
        if f == "grad":
            if len(ops[0].shape) > 1:
                raise ShapeMismatch(f"{_where(node)}grad of a rank-{len(ops[0].shape)} expression")
            return E.Grad(ops[0])
        if f == "div":
            if ops[0].shape == () or ops[0].shape[-1] != 2:
                raise ShapeMismatch(f"{_where(node)}div of shape {ops[0].shape}")
            return E.Div(ops[0])
        # jump / avg
        if measure == "dx":
            raise RestrictionError(f"{_where(node)}{f} used in a cell integral")
        v = ops[0]
        if f == "avg":
            if measure == "ds":
                return v
            return E.Product(E.Constant(0.5), E.Sum(E.Restricted(v, "+"), E.Restricted(v, "-")))
        if len(ops) == 1:
            if measure == "ds":
                return v
            return E.Sum(E.Restricted(v, "+"), E.Product(E.Constant(-1.0), E.Restricted(v, "-")))
        n = ops[1]
        if v.shape == ():
            pair = lambda x, y: E.Product(x, y)  # noqa: E731
        elif v.shape == n.shape:
            pair = E.Dot
        else:
            raise ShapeMismatch(f"{_where(node)}jump of shapes {v.shape} and {n.shape}")
        if measure == "ds":
            return pair(v, n)
        return E.Sum(pair(E.Restricted(v, "+"), E.Restricted(n, "+")),
                     pair(E.Restricted(v, "-"), E.Restricted(n, "-")))


def scalar_product(a, b, node=None):
    if a.shape == ():
        return E.Product(a, b)
    if b.shape == ():
        return E.Product(b, a)
    raise ShapeMismatch(f"{_where(node)}'*' needs a scalar operand, got shapes {a.shape} "
                        f"and {b.shape}; use dot or mult")


def _syntax_children(node):
    if isinstance(node, BinOp):
        return (node.left, node.right)
    if isinstance(node, (Neg, Restrict, Index)):
        return (node.operand,)
    if isinstance(node, Call):
        return node.args
    return ()


def linear_arguments(expr) -> set:
    """Argument slots of ``expr``, checking that it is multilinear in them."""
    if isinstance(expr, E.Argument):
        return {expr.slot}
    if isinstance(expr, (E.Sum, E.ListVector)):
        sets = [linear_arguments(c) for c in expr.children]
        if any(s != sets[0] for s in sets):
            raise SemanticError("sum of terms with different arguments (form is not multilinear)")
        return sets[0]
    if isinstance(expr, E.Division):
        if linear_arguments(expr.b):
            raise SemanticError("division by an expression containing a test/trial function")
        return linear_arguments(expr.a)
    if isinstance(expr, (E.Product, E.Dot, E.MatVec)):
        a, b = linear_arguments(expr.a), linear_arguments(expr.b)
        if a & b:
            raise SemanticError("product of a test/trial function with itself (form is not multilinear)")
        return a | b
    out = set()
    for c in expr.children:
        out |= linear_arguments(c)
    return out


def validate_restrictions(expr, measure, side=None):
    if isinstance(expr, E.Restricted):
        if side is not None and side != expr.side:
            raise RestrictionError(f"conflicting restrictions ('{side}') and ('{expr.side}')")
        return validate_restrictions(expr.a, measure, expr.side)
    if isinstance(expr, (E.FacetNormal, E.FacetIndicator)) and measure == "dx":
        raise SemanticError(f"{type(expr).__name__} used in a cell integral")
    if measure == "dS" and side is None and isinstance(
            expr, (E.Argument, E.Coefficient, E.FacetNormal, E.MeshSize, E.FacetIndicator)):
        what = getattr(expr, "name", None) or type(expr).__name__
        raise RestrictionError(f"{what} must be restricted (or inside jump/avg) in an interior "
                               f"facet integral")
    for ch in expr.children:
        validate_restrictions(ch, measure, side)


def check(ff, elements=None, constants=None) -> TypedFormFile:
    """Resolve and type a parsed form file.

    ``elements`` maps element names to a replacement degree (int) or element
    object; ``constants`` maps numeric constant names to replacement values.
    """
    if isinstance(ff, TypedFormFile):
        return ff
    return Checker(ff, elements, constants).run()
