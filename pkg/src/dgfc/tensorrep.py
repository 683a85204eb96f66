"""Tensor-contraction representation: A_i = sum_alpha A0[i, alpha] G[alpha].

Monomials sharing the same reference factors (argument and coefficient basis
functions with their reference derivatives) form one term.  Its reference
tensor integrates the product of those basis functions over the reference
cell or facet; its geometry recipe sums the geometric prefactors and is
multiplied at run time by the coefficient dofs, giving one secondary axis per
coefficient factor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegreeOverflow, KernelError, ShapeMismatch
from .integration import facet_points, quadrature_rule
from .refelem import tabulate

MAX_QUADRATURE_DEGREE = 60
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class ReferenceTensor:
    A0: np.ndarray  # primary axes then one axis per coefficient factor
    measure: str
    facets: tuple  # () for cells, (f,) exterior, (f+, f-) interior
    degree: int  # quadrature degree used
    rank: int = 0
    signature: tuple = ()  # the reference factors integrated

    @property
    def primary_shape(self):
        return self.A0.shape[:self.rank]


@dataclass(frozen=True)
class GeometryRecipe:
    """g = scale * sum_t c_t prod(geometric factors of t), times coefficient dofs."""

    terms: tuple  # ((coeff, factors), ...)
    coefficients: tuple  # ((name, side, dim), ...) one secondary axis each

    @property
    def secondary_shape(self):
        return tuple(dim for _, _, dim in self.coefficients)


@dataclass(frozen=True)
class TensorKernel:
    measure: str
    facets: tuple
    shape: tuple  # element tensor shape
    terms: tuple  # ((ReferenceTensor, GeometryRecipe), ...)
    stacked: np.ndarray  # (prod(shape), total secondary size)

    @property
    def num_secondary(self) -> int:
        return self.stacked.shape[1]

    def evaluate(self, data, coefficients=None):
        """Element tensors for a batch, shape (B, *shape), plus a flop count."""
        if data.measure != self.measure:
            raise KernelError(f"{self.measure} kernel given {data.measure} data")
        coefficients = coefficients or {}
        flops = 0
        blocks = []
        for _, recipe in self.terms:
            G, f = eval_geometry(recipe, data, coefficients, self.measure)
            blocks.append(G.reshape(len(data), -1))
            flops += f
        B = len(data)
        if blocks:
            G = np.hstack(blocks)
            A = G @ self.stacked.T
        else:
            A = np.zeros((B, self.stacked.shape[0]))
        flops += contraction_flops(self) * B
        return A.reshape((B,) + self.shape), flops // max(B, 1)


def contraction_flops(kernel: TensorKernel) -> int:
    """Multiply-adds (counted as 2 flops) of one contraction, zeros skipped."""
    return 2 * int(np.count_nonzero(kernel.stacked))


def geometric_value(factor, data) -> np.ndarray:
    kind = factor[0]
    if kind == "K":
        return data.K(factor[1])[:, factor[2], factor[3]]
    if kind == "n":
        return data.normal(factor[1])[:, factor[2]]
    if kind == "of":
        return data.indicator(factor[1])
    if kind == "h":
        return data.h() ** factor[1]
    raise KernelError(f"unknown geometric factor {factor!r}")


def eval_geometry(recipe: GeometryRecipe, data, coefficients, measure=None):
    """Geometry tensor for a batch: (B, *secondary_shape) and a flop count per batch."""
    B = len(data)
    g = np.zeros(B)
    flops = 0
    for c, factors in recipe.terms:
        t = np.full(B, c)
        for f in factors:
            t = t * geometric_value(f, data)
        g += t
        flops += B * (len(factors) + 1)
    g = g * data.scale()
    flops += B
    G = g
    for name, side, dim in recipe.coefficients:
        w = coefficient_dofs(coefficients, name, side)
        if w.shape != (B, dim):
            raise ShapeMismatch(f"coefficient {name!r} dofs have shape {w.shape}, expected {(B, dim)}")
        G = G[..., None] * w.reshape((B,) + (1,) * (G.ndim - 1) + (dim,))
        flops += G.size
    return G, flops


def coefficient_dofs(coefficients, name, side):
    for key in ((name, side), (name, "+" if side == "" else side), name):
        if key in coefficients:
            w = coefficients[key]
            if callable(w) or not hasattr(w, "shape"):
                raise KernelError(f"coefficient {name!r} must be given as local dofs in tensor mode")
            return np.asarray(w, dtype=float)
    raise KernelError(f"missing dofs for coefficient {name!r} (side {side!r})")


def _factor_element(factor, elements, coef_elements):
    if factor[0] == "arg":
        return elements[factor[1]]
    return coef_elements[factor[1]]


def _factor_degree(factor, element):
    return max(element.component_degree(factor[3]) - sum(factor[4]), 0)


def reference_tensor(signature, measure, key, elements, coef_elements, rank, cache=None):
    """Integrate a product of reference basis factors over the reference entity."""
    degree = sum(_factor_degree(f, _factor_element(f, elements, coef_elements)) for f in signature)
    if degree > MAX_QUADRATURE_DEGREE:
        raise DegreeOverflow(f"reference integrand of degree {degree} exceeds {MAX_QUADRATURE_DEGREE}")
    rule = quadrature_rule(measure, degree)
    points = facet_points(measure, key, rule)
    cache = {} if cache is None else cache
    two = measure == "dS"
    tables, subs = [], []
    for j, f in enumerate(signature):
        element = _factor_element(f, elements, coef_elements)
        side = f[2]
        ck = (element, degree, side, f[3], f[4], key, measure)
        if ck not in cache:
            tab = tabulate(element, points[side], sum(f[4]))
            cache[ck] = tab.derivative(f[4])[:, :, f[3]]
        table = cache[ck]
        if f[0] == "arg" and two:
            n = table.shape[1]
            full = np.zeros((table.shape[0], 2 * n))
            off = 0 if side == "+" else n
            full[:, off:off + n] = table
            table = full
        tables.append(table)
        subs.append("q" + _LETTERS[j])
    if not signature:
        A0 = np.array(float(np.sum(rule.weights)))
    else:
        expr = "q," + ",".join(subs) + "->" + "".join(s[1] for s in subs)
        A0 = np.einsum(expr, rule.weights, *tables, optimize=True)
    return ReferenceTensor(A0, measure, tuple(key), degree, rank, tuple(signature))


def _argument_shape(elements, measure):
    return tuple((2 if measure == "dS" else 1) * e.space_dim for e in elements)


def build_kernel(monomials, measure, key, elements, coef_elements) -> TensorKernel:
    """Group monomials by reference signature and precompute their tensors."""
    groups = {}
    for m in monomials:
        args = tuple(sorted(m.arguments, key=lambda f: f[1]))
        sig = args + m.coefficient_factors
        groups.setdefault(sig, []).append((m.coeff, m.geometric_factors))
    shape = _argument_shape(elements, measure)
    rank = len(shape)
    nI = int(np.prod(shape)) if shape else 1
    cache = {}
    terms, columns = [], []
    for sig in sorted(groups, key=repr):
        ref = reference_tensor(sig, measure, key, elements, coef_elements, rank, cache)
        coefs = tuple((f[1], f[2], coef_elements[f[1]].space_dim) for f in sig if f[0] == "coef")
        recipe = GeometryRecipe(tuple(groups[sig]), coefs)
        terms.append((ref, recipe))
        columns.append(ref.A0.reshape(nI, -1))
    stacked = np.hstack(columns) if columns else np.zeros((nI, 0))
    return TensorKernel(measure, tuple(key), shape, tuple(terms), stacked)


def kernel_keys(measure):
    if measure == "dx":
        return [()]
    if measure == "ds":
        return [(f,) for f in range(3)]
    return [(fp, fm) for fp in range(3) for fm in range(3)]


def _build_all(mform, measure):
    coef_elements = dict(mform.coefficients)
    monomials = mform.monomials.get(measure, ())
    return {key: build_kernel(monomials, measure, key, mform.elements, coef_elements)
            for key in kernel_keys(measure)}


def build_cell_kernel(mform) -> TensorKernel:
    return _build_all(mform, "dx")[()]


def build_exterior_facet_kernels(mform) -> dict:
    """Kernels keyed by (f,) for the three local facets."""
    return _build_all(mform, "ds")


def build_interior_facet_kernels(mform) -> dict:
    """Kernels keyed by (f+, f-), one per facet-facet topology."""
    return _build_all(mform, "dS")


def contract(A0, G):
    """Contract the trailing (secondary) axes of ``A0`` with ``G``."""
    A0 = np.asarray(A0, dtype=float)
    G = np.asarray(G, dtype=float)
    if G.ndim > A0.ndim or A0.shape[A0.ndim - G.ndim:] != G.shape:
        raise ShapeMismatch(f"cannot contract A0 of shape {A0.shape} with G of shape {G.shape}")
    prim = A0.shape[:A0.ndim - G.ndim]
    return (A0.reshape(prim + (-1,)) @ G.reshape(-1)).reshape(prim)
