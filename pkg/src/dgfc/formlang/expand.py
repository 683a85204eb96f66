"""Expansion of typed integrands into sums of monomials in reference coordinates.

A monomial is a constant times a product of factors:

    ("arg", slot, side, comp, (dX0, dX1))    reference basis function (derivative counts)
    ("coef", name, side, comp, (dX0, dX1))   coefficient, expanded in its own basis
    ("K", side, a, b)                        inverse Jacobian entry dX_a/dx_b
    ("n", side, d)                           facet normal component
    ("of", side)                             facet indicator
    ("h", power)                             mesh size power (facet average on dS)

``side`` is "" on cells and exterior facets and "+"/"-" on interior facets.
The measure scale (|det F'| or facet length) is implicit and applied per
measure by the kernels.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from itertools import product as iproduct

from ..errors import NonAffineDivision, UnsupportedExpression
from . import exprs as E

_BASIS = ("arg", "coef")


@dataclass(frozen=True)
class Monomial:
    coeff: float
    factors: tuple  # sorted, with repetition

    @property
    def arguments(self) -> tuple:
        return tuple(f for f in self.factors if f[0] == "arg")

    @property
    def coefficient_factors(self) -> tuple:
        return tuple(f for f in self.factors if f[0] == "coef")

    @property
    def geometric_factors(self) -> tuple:
        return tuple(f for f in self.factors if f[0] not in _BASIS)

    @property
    def reference_signature(self) -> tuple:
        """Factors integrated on the reference element."""
        return self.arguments + self.coefficient_factors


@dataclass(frozen=True)
class MonomialForm:
    name: str
    rank: int
    elements: tuple
    coefficients: tuple
    monomials: dict  # measure -> tuple of Monomial

    def measures(self):
        return tuple(self.monomials)


# polynomials: dict from sorted factor tuple -> coefficient ------------------

def _mul(p, q):
    out = defaultdict(float)
    for fa, ca in p.items():
        for fb, cb in q.items():
            out[_merge(fa, fb)] += ca * cb
    return dict(out)


def _merge(fa, fb):
    """Merge two factor tuples, combining mesh-size powers."""
    hp = 0
    rest = []
    for f in fa + fb:
        if f[0] == "h":
            hp += f[1]
        else:
            rest.append(f)
    if hp:
        rest.append(("h", hp))
    return tuple(sorted(rest, key=repr))


def _add(p, q, scale=1.0):
    out = dict(p)
    for k, c in q.items():
        out[k] = out.get(k, 0.0) + scale * c
    return out


def _scale(p, s):
    return {k: s * c for k, c in p.items()}


def _const(c):
    return {(): float(c)}


def _atom(factor):
    return {(factor,): 1.0}


def _deriv(p, d):
    """Physical derivative d/dx_d; only basis factors vary within a cell."""
    out = defaultdict(float)
    for factors, c in p.items():
        for i, f in enumerate(factors):
            if f[0] in _BASIS:
                counts = list(f[4])
                counts[d] += 1
                g = f[:4] + (tuple(counts),)
                out[_merge(factors[:i] + factors[i + 1:], (g,))] += c
    return dict(out)


def _restrict(p, side):
    out = {}
    for factors, c in p.items():
        fs = []
        for f in factors:
            if f[0] in _BASIS:
                f = (f[0], f[1], side if f[2] == "" else f[2], f[3], f[4])
            elif f[0] in ("n", "K", "of") and f[1] == "":
                f = (f[0], side) + f[2:]
            fs.append(f)
        key = _merge(tuple(fs), ())
        out[key] = out.get(key, 0.0) + c
    return out


# tensor-valued polynomials: dict index tuple -> polynomial ------------------

class _T:
    def __init__(self, shape, data):
        self.shape = shape
        self.data = data  # index tuple -> poly

    def __getitem__(self, idx):
        return self.data.get(idx, {})


def _indices(shape):
    return list(iproduct(*[range(s) for s in shape]))


def _expand(expr) -> _T:
    if isinstance(expr, (E.Argument, E.Coefficient)):
        head = ("arg", expr.slot) if isinstance(expr, E.Argument) else ("coef", expr.name)
        shape = expr.shape
        data = {}
        for c, idx in enumerate(_indices(shape)):
            data[idx] = _atom(head + ("", c, (0, 0)))
        return _T(shape, data)
    if isinstance(expr, E.FacetNormal):
        return _T((2,), {(d,): _atom(("n", "", d)) for d in range(2)})
    if isinstance(expr, E.MeshSize):
        return _T((), {(): _atom(("h", 1))})
    if isinstance(expr, E.FacetIndicator):
        return _T((), {(): _atom(("of", ""))})
    if isinstance(expr, E.Constant):
        return _T((), {(): _const(expr.value)})
    if isinstance(expr, E.Sum):
        a, b = _expand(expr.a), _expand(expr.b)
        return _T(a.shape, {i: _add(a[i], b[i]) for i in _indices(a.shape)})
    if isinstance(expr, E.Product):
        a, b = _expand(expr.a), _expand(expr.b)
        s = a[()]
        return _T(b.shape, {i: _mul(s, b[i]) for i in _indices(b.shape)})
    if isinstance(expr, E.Division):
        a, b = _expand(expr.a), _expand(expr.b)
        inv = _invert(b[()])
        return _T(a.shape, {i: _mul(inv, a[i]) for i in _indices(a.shape)})
    if isinstance(expr, E.Grad):
        a = _expand(expr.a)
        shape = a.shape + (2,)
        return _T(shape, {i: _deriv(a[i[:-1]], i[-1]) for i in _indices(shape)})
    if isinstance(expr, E.Div):
        a = _expand(expr.a)
        shape = a.shape[:-1]
        data = {}
        for i in _indices(shape):
            p = {}
            for d in range(a.shape[-1]):
                p = _add(p, _deriv(a[i + (d,)], d))
            data[i] = p
        return _T(shape, data)
    if isinstance(expr, E.Dot):
        a, b = _expand(expr.a), _expand(expr.b)
        p = {}
        for i in _indices(a.shape):
            p = _add(p, _mul(a[i], b[i]))
        return _T((), {(): p})
    if isinstance(expr, E.MatVec):
        a, b = _expand(expr.a), _expand(expr.b)
        shape = a.shape[:-1] + b.shape[1:]
        data = {}
        for i in _indices(shape):
            p = {}
            for k in range(a.shape[-1]):
                p = _add(p, _mul(a[i[:len(a.shape) - 1] + (k,)], b[(k,) + i[len(a.shape) - 1:]]))
            data[i] = p
        return _T(shape, data)
    if isinstance(expr, E.Restricted):
        a = _expand(expr.a)
        return _T(a.shape, {i: _restrict(a[i], expr.side) for i in _indices(a.shape)})
    if isinstance(expr, E.Indexed):
        a = _expand(expr.a)
        shape = a.shape[1:]
        return _T(shape, {i: a[(expr.index,) + i] for i in _indices(shape)})
    if isinstance(expr, E.ListVector):
        parts = [_expand(x) for x in expr.items]
        shape = (len(parts),) + parts[0].shape
        return _T(shape, {i: parts[i[0]][i[1:]] for i in _indices(shape)})
    raise UnsupportedExpression(f"cannot expand {type(expr).__name__}")


def _invert(p):
    p = {k: c for k, c in p.items() if c != 0.0}
    if len(p) != 1:
        raise NonAffineDivision("division is only allowed by a single product of constants and h")
    (factors, c), = p.items()
    if any(f[0] != "h" for f in factors):
        raise NonAffineDivision("division by a non-geometric expression")
    return {tuple(("h", -f[1]) for f in factors): 1.0 / c}


def _pullback(p):
    """Replace physical derivative counts by reference ones times dX/dx factors."""
    out = defaultdict(float)
    for factors, c in p.items():
        choices = []
        for f in factors:
            if f[0] in _BASIS and f[4] != (0, 0):
                phys = [0] * f[4][0] + [1] * f[4][1]
                opts = []
                for ref in iproduct(range(2), repeat=len(phys)):
                    counts = (ref.count(0), ref.count(1))
                    ks = tuple(("K", f[2], a, b) for a, b in zip(ref, phys))
                    opts.append((f[:4] + (counts,),) + ks)
                choices.append(opts)
            else:
                choices.append([(f,)])
        for combo in iproduct(*choices):
            key = _merge(tuple(x for group in combo for x in group), ())
            out[key] += c
    return out


def expand_integrand(expr) -> tuple:
    """Monomials of a scalar typed integrand, in canonical order, zero terms dropped."""
    t = _expand(expr)
    poly = _pullback(t[()])
    return tuple(Monomial(c, f) for f, c in sorted(poly.items(), key=lambda kv: repr(kv[0]))
                 if c != 0.0)


def expand(form) -> MonomialForm:
    monomials = {}
    for integral in form.integrals:
        terms = monomials.setdefault(integral.measure, {})
        for m in expand_integrand(integral.integrand):
            terms[m.factors] = terms.get(m.factors, 0.0) + m.coeff
    out = {}
    for measure in ("dx", "ds", "dS"):
        if measure in monomials:
            out[measure] = tuple(Monomial(c, f) for f, c in
                                 sorted(monomials[measure].items(), key=lambda kv: repr(kv[0]))
                                 if c != 0.0)
    return MonomialForm(form.name, form.rank, form.elements, form.coefficients, out)


def evaluate_monomials(monomials, basis, geometry) -> float:
    """Evaluate a monomial sum given callables for the factor values.

    ``basis(factor)`` returns the value of an "arg"/"coef" factor and
    ``geometry(factor)`` of any other factor; used to cross-check expansion.
    """
    total = 0.0
    for m in monomials:
        v = m.coeff
        for f in m.factors:
            v *= basis(f) if f[0] in _BASIS else geometry(f)
        total += v
    return total
