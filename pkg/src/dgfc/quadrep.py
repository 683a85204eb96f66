"""Quadrature-mode kernels: evaluate the typed integrand at run-time quadrature points.

This backend interprets the checked expression tree directly (it never sees
the monomial expansion), so it doubles as the oracle for the tensor backend.
Values are carried as jets (value, gradient, Hessian) with leading axes
(cell, point, test basis, trial basis) followed by the value shape.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import KernelError, UnsupportedExpression
from .formlang import exprs as E
from .integration import facet_points, quadrature_rule
from .refelem import tabulate
from .tensorrep import MAX_QUADRATURE_DEGREE, DegreeOverflow

LEAD = 4


@dataclass
class AnalyticFunction:
    """Callable coefficient evaluated at physical points of shape (P, 2).

    ``value`` returns (P,) or (P, m); ``grad`` appends an axis of length 2 and
    ``hess`` two.  Derivatives are only needed if the form differentiates
    the coefficient.
    """

    value: object
    grad: object = None
    hess: object = None
    value_shape: tuple = ()

    def __call__(self, x):
        return self.value(x)


class _Counter:
    def __init__(self):
        self.flops = 0

    def add(self, n):
        self.flops += int(n)


@dataclass
class _Jet:
    v: np.ndarray
    d: np.ndarray | None = None  # v.shape + (2,)
    h: np.ndarray | None = None  # v.shape + (2, 2)
    shape: tuple = ()


def _const_jet(value, shape=()):
    v = np.asarray(value, dtype=float)
    return _Jet(v.reshape((1,) * LEAD + v.shape) if v.ndim == len(shape) else v, None, None, shape)


def _d(j, k):
    return None if j.d is None else j.d[..., k]


def _h(j, k, l):
    return None if j.h is None else j.h[..., k, l]


def _bilinear(op, a, b, shape, order, counter):
    def app(x, y):
        if x is None or y is None:
            return None
        r = op(x, y)
        counter.add(r.size)
        return r

    def total(*parts):
        parts = [p for p in parts if p is not None]
        if not parts:
            return None
        out = parts[0]
        for p in parts[1:]:
            out = out + p
            counter.add(out.size)
        return out

    v = app(a.v, b.v)
    d = h = None
    if order >= 1:
        ds = [total(app(_d(a, k), b.v), app(a.v, _d(b, k))) for k in range(2)]
        if any(x is not None for x in ds):
            ds = [x if x is not None else np.zeros_like(v) for x in ds]
            d = np.stack(np.broadcast_arrays(*ds), axis=-1)
    if order >= 2:
        hs = []
        for k in range(2):
            row = []
            for l in range(2):
                row.append(total(app(_h(a, k, l), b.v), app(_d(a, k), _d(b, l)),
                                 app(_d(a, l), _d(b, k)), app(a.v, _h(b, k, l))))
            hs.append(row)
        if any(x is not None for row in hs for x in row):
            flat = [x if x is not None else np.zeros(1) for row in hs for x in row]
            flat = np.broadcast_arrays(*flat, v)[:4]
            h = np.stack([np.stack(flat[0:2], axis=-1), np.stack(flat[2:4], axis=-1)], axis=-2)
    return _Jet(v, d, h, shape)


def _scalar_times(rank):
    def op(x, y):
        return x.reshape(x.shape + (1,) * rank) * y
    return op


def _contract(rank):
    def op(x, y):
        p = x * y
        return p.sum(axis=tuple(range(p.ndim - rank, p.ndim))) if rank else p
    return op


def _matmul(ra, rb):
    def op(x, y):
        if rb == 1:
            return np.einsum("...ij,...j->...i", x, y)
        return np.einsum("...ij,...jk->...ik", x, y)
    return op


def _add(a, b, counter):
    def s(x, y):
        if x is None:
            return y
        if y is None:
            return x
        r = x + y
        counter.add(r.size)
        return r
    return _Jet(s(a.v, b.v), s(a.d, b.d), s(a.h, b.h), a.shape)


class QuadKernel:
    """Quadrature-mode kernel for one measure and facet slot."""

    def __init__(self, integrands, measure, key, elements, coef_elements, degree=None):
        self.measure = measure
        self.facets = tuple(key)
        self.integrands = tuple(integrands)
        self.elements = tuple(elements)
        self.coef_elements = dict(coef_elements)
        if degree is None:
            degree = max((E.polynomial_degree(e) for e in self.integrands), default=0)
        if degree > MAX_QUADRATURE_DEGREE:
            raise DegreeOverflow(f"quadrature degree {degree} exceeds {MAX_QUADRATURE_DEGREE}")
        self.degree = degree
        self.rule = quadrature_rule(measure, degree)
        self.points = facet_points(measure, key, self.rule)
        self.shape = tuple((2 if measure == "dS" else 1) * e.space_dim for e in self.elements)
        order = max((E.max_derivative_order(e) for e in self.integrands), default=0)
        self._tables = {}
        for side, pts in self.points.items():
            for el in set(self.elements) | set(self.coef_elements.values()):
                self._tables[(el, side)] = tabulate(el, pts, order)

    @property
    def num_points(self) -> int:
        return len(self.rule)

    def evaluate(self, data, coefficients=None):
        """Element tensors (B, *shape) and flops per element tensor."""
        if data.measure != self.measure:
            raise KernelError(f"{self.measure} kernel given {data.measure} data")
        counter = _Counter()
        self._data = data
        self._coefs = coefficients or {}
        B = len(data)
        Q = self.num_points
        total = np.zeros((B, Q) + tuple(self.shape) + (1,) * (2 - len(self.shape)))
        for integrand in self.integrands:
            side = ""
            jet = self._eval(integrand, 0, side, counter)
            total = total + np.broadcast_to(jet.v, total.shape)
            counter.add(total.size)
        wscale = data.scale()[:, None] * self.rule.weights[None, :]
        A = np.einsum("bqij,bq->bij", total, wscale)
        counter.add(2 * total.size + wscale.size)
        self._data = self._coefs = None
        return A.reshape((B,) + self.shape), counter.flops // max(B, 1)

    # terminals ---------------------------------------------------------------
    def _argument(self, expr, order, side, counter):
        data = self._data
        el = expr.element
        if self.measure == "dS" and side == "":
            raise KernelError("unrestricted argument in an interior facet integral")
        tab = self._tables[(el, side)]
        n = el.space_dim
        K = data.K(side)  # (B, 2, 2): K[a, k] = dX_a/dx_k
        vref = tab.values  # (Q, n, c)
        parts = [vref[None]]
        if order >= 1:
            d = np.einsum("qnca,bak->bqnck", tab.derivs, K)
            counter.add(2 * d.size * 2)
            parts.append(d)
        if order >= 2:
            hh = np.einsum("qncae,bak,bel->bqnckl", tab.second_derivs, K, K)
            counter.add(2 * hh.size * 4)
            parts.append(hh)
        out = []
        for p in parts:
            if self.measure == "dS":
                full = np.zeros(p.shape[:2] + (2 * n,) + p.shape[3:])
                off = 0 if side == "+" else n
                full[:, :, off:off + n] = p
                p = full
            if el.value_shape == ():
                p = p[:, :, :, 0]
            # insert the other argument axis
            p = np.expand_dims(p, 3 if expr.slot == 0 else 2)
            out.append(p)
        while len(out) < 3:
            out.append(None)
        return _Jet(out[0], out[1], out[2], el.value_shape)

    def _coefficient(self, expr, order, side, counter):
        data = self._data
        name = expr.name
        value = None
        for key in ((name, side), (name, "+" if side == "" else side), name):
            if key in self._coefs:
                value = self._coefs[key]
                break
        if value is None:
            raise KernelError(f"missing values for coefficient {name!r}")
        el = expr.element
        B = len(data)
        if isinstance(value, AnalyticFunction) or callable(value):
            fn = value if isinstance(value, AnalyticFunction) else AnalyticFunction(value)
            x = data.physical_points(side, self.rule).reshape(-1, 2)
            Q = self.num_points
            shape = el.value_shape

            def ev(f, extra):
                if f is None:
                    raise KernelError(f"analytic coefficient {name!r} lacks derivatives")
                r = np.asarray(f(x), dtype=float).reshape((B, Q) + shape + extra)
                return r[:, :, None, None]
            parts = [ev(fn.value, ())]
            if order >= 1:
                parts.append(ev(fn.grad, (2,)))
            if order >= 2:
                parts.append(ev(fn.hess, (2, 2)))
            while len(parts) < 3:
                parts.append(None)
            return _Jet(parts[0], parts[1], parts[2], shape)
        w = np.asarray(value, dtype=float)
        tab = self._tables[(el, side)]
        K = data.K(side)
        v = np.einsum("qnc,bn->bqc", tab.values, w)
        counter.add(2 * w.size * tab.values.shape[0] * tab.values.shape[2])
        parts = [v]
        if order >= 1:
            gref = np.einsum("qnca,bn->bqca", tab.derivs, w)
            parts.append(np.einsum("bqca,bak->bqck", gref, K))
            counter.add(2 * gref.size * (w.shape[1] + 2))
        if order >= 2:
            href = np.einsum("qncae,bn->bqcae", tab.second_derivs, w)
            parts.append(np.einsum("bqcae,bak,bel->bqckl", href, K, K))
            counter.add(2 * href.size * (w.shape[1] + 8))
        out = []
        for p in parts:
            if el.value_shape == ():
                p = p[:, :, 0]
            out.append(p[:, :, None, None])
        while len(out) < 3:
            out.append(None)
        return _Jet(out[0], out[1], out[2], el.value_shape)

    def _geometric(self, values, shape=()):
        v = np.asarray(values, dtype=float)
        B = v.shape[0]
        return _Jet(v.reshape((B, 1, 1, 1) + shape), None, None, shape)

    # interpreter ---------------------------------------------------------------
    def _eval(self, expr, order, side, counter):
        data = self._data
        if isinstance(expr, E.Argument):
            return self._argument(expr, order, side, counter)
        if isinstance(expr, E.Coefficient):
            return self._coefficient(expr, order, side, counter)
        if isinstance(expr, E.Constant):
            return _const_jet(expr.value)
        if isinstance(expr, E.FacetNormal):
            return self._geometric(data.normal(side), (2,))
        if isinstance(expr, E.MeshSize):
            return self._geometric(data.h())
        if isinstance(expr, E.FacetIndicator):
            return self._geometric(data.indicator(side))
        if isinstance(expr, E.Restricted):
            return self._eval(expr.a, order, expr.side, counter)
        if isinstance(expr, E.Sum):
            return _add(self._eval(expr.a, order, side, counter),
                        self._eval(expr.b, order, side, counter), counter)
        if isinstance(expr, E.Product):
            a = self._eval(expr.a, order, side, counter)
            b = self._eval(expr.b, order, side, counter)
            return _bilinear(_scalar_times(len(b.shape)), a, b, b.shape, order, counter)
        if isinstance(expr, E.Division):
            a = self._eval(expr.a, order, side, counter)
            b = self._eval(expr.b, 0, side, counter)
            if b.d is not None:
                raise UnsupportedExpression("division by a varying expression")
            inv = _Jet(1.0 / b.v, None, None, ())
            counter.add(b.v.size)
            return _bilinear(_scalar_times(len(a.shape)), inv, a, a.shape, order, counter)
        if isinstance(expr, E.Dot):
            a = self._eval(expr.a, order, side, counter)
            b = self._eval(expr.b, order, side, counter)
            return _bilinear(_contract(len(a.shape)), a, b, (), order, counter)
        if isinstance(expr, E.MatVec):
            a = self._eval(expr.a, order, side, counter)
            b = self._eval(expr.b, order, side, counter)
            return _bilinear(_matmul(len(a.shape), len(b.shape)), a, b, expr.shape, order, counter)
        if isinstance(expr, E.Grad):
            if order + 1 > 2:
                raise UnsupportedExpression("derivatives of order above 2")
            a = self._eval(expr.a, order + 1, side, counter)
            shape = a.shape + (2,)
            if a.d is None:
                return _Jet(np.zeros(a.v.shape + (2,)), None, None, shape)
            return _Jet(a.d, a.h, None, shape)
        if isinstance(expr, E.Div):
            if order + 1 > 2:
                raise UnsupportedExpression("derivatives of order above 2")
            a = self._eval(expr.a, order + 1, side, counter)
            if a.d is None:
                return _Jet(np.zeros(a.v.shape[:-1]), None, None, a.shape[:-1])
            v = np.trace(a.d, axis1=-2, axis2=-1)
            d = None if a.h is None else np.trace(a.h, axis1=-3, axis2=-2)
            counter.add(v.size)
            return _Jet(v, d, None, a.shape[:-1])
        if isinstance(expr, E.Indexed):
            a = self._eval(expr.a, order, side, counter)
            i = expr.index
            take = lambda x: None if x is None else np.take(x, i, axis=LEAD)  # noqa: E731
            return _Jet(take(a.v), take(a.d), take(a.h), a.shape[1:])
        if isinstance(expr, E.ListVector):
            items = [self._eval(x, order, side, counter) for x in expr.items]

            def stack(xs):
                if all(x is None for x in xs):
                    return None
                ref = next(x for x in xs if x is not None)
                xs = [x if x is not None else np.zeros_like(ref) for x in xs]
                return np.stack(np.broadcast_arrays(*xs), axis=LEAD)
            return _Jet(stack([j.v for j in items]), stack([j.d for j in items]),
                        stack([j.h for j in items]), expr.shape)
        raise UnsupportedExpression(f"quadrature mode cannot evaluate {type(expr).__name__}")


def build_quad_kernels(form, measure, degree=None) -> dict:
    """Quadrature kernels for every facet slot of ``measure``."""
    from .tensorrep import kernel_keys
    integrands = [i.integrand for i in form.integrals if i.measure == measure]
    coef = dict(form.coefficients)
    return {key: QuadKernel(integrands, measure, key, form.elements, coef, degree)
            for key in kernel_keys(measure)}


def build_quad_kernel(form, measure, key=(), degree=None) -> QuadKernel:
    integrands = [i.integrand for i in form.integrals if i.measure == measure]
    return QuadKernel(integrands, measure, key, form.elements, dict(form.coefficients), degree)


# performance model ---------------------------------------------------------------

@dataclass(frozen=True)
class OpCountReport:
    kernel: str
    flops: int  # measured per element tensor
    entries: int
    degree: int
    model_tensor: float  # T_T per entry
    model_quadrature: float  # T_Q per entry
    model_speedup: float
    model_points: int
    extra: dict = field(default_factory=dict)

    @property
    def flops_per_entry(self) -> float:
        return self.flops / max(self.entries, 1)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("kernel", "flops", "entries", "degree", "model_tensor",
                                             "model_quadrature", "model_speedup", "model_points")}
        out["flops_per_entry"] = self.flops_per_entry
        out.update(self.extra)
        return out


def model_points(k: int, d: int = 2) -> int:
    """Quadrature points needed to integrate a product of two degree k-1 gradients exactly."""
    return (2 * k - 1) ** d


def model_speedup(k: int, d: int = 2) -> float:
    return 2.0 * (2 * k - 1) ** d / d


def model_costs(k: int, d: int = 2):
    t_tensor = d * d * (d + 1) + d * d
    t_quad = 2 * d * d * model_points(k, d)
    return float(t_tensor), float(t_quad)


def count_ops(kernel, data=None, coefficients=None, name="kernel", k=None) -> OpCountReport:
    """Measure flops for one element tensor by running the kernel on ``data``."""
    from .integration import cell_data
    if data is None:
        data = cell_data([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    _, flops = kernel.evaluate(data, coefficients or {})
    entries = int(np.prod(kernel.shape)) if kernel.shape else 1
    if k is None:
        els = getattr(kernel, "elements", None)
        k = max((e.degree for e in els), default=1) if els else 1
    t_t, t_q = model_costs(k)
    return OpCountReport(name, int(flops), entries, int(k), t_t, t_q, model_speedup(k), model_points(k))
