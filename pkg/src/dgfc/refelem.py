"""Reference triangle, quadrature rules and Lagrange basis tabulation.

The reference cell has vertices (0,0), (1,0), (0,1).  Facet ``i`` is the
edge opposite vertex ``i`` and is parameterised from its lower-numbered
vertex to its higher-numbered one, so two cells that share an edge and
store their vertices in ascending global order walk the edge in the same
direction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import eval_jacobi, roots_jacobi

from .errors import (
    BadFacetIndex,
    ContinuousDegreeZero,
    SingularVandermonde,
    UnsupportedDegree,
    UnsupportedElement,
)

MAX_DEGREE = 15
MAX_DERIV_ORDER = 2


@dataclass(frozen=True)
class ReferenceCell:
    dimension: int = 2
    vertices: tuple = ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))
    facets: tuple = ((1, 2), (0, 2), (0, 1))

    @property
    def area(self) -> float:
        return 0.5

    def facet_vertices(self, f: int) -> np.ndarray:
        a, b = self.facets[f]
        return np.array([self.vertices[a], self.vertices[b]])


REFERENCE_TRIANGLE = ReferenceCell()

# outward normals of the reference facets (unnormalised form of -grad(lambda_f))
REFERENCE_BARYCENTRIC_GRADIENTS = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __len__(self):
        return len(self.weights)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _npoints(degree: int) -> int:
    return max(1, (degree + 2) // 2)


@lru_cache(maxsize=None)
def cell_quadrature(required_degree: int) -> QuadratureRule:
    """Collapsed Gauss rule on the reference triangle.

    Gauss-Legendre along the collapsed direction and Gauss-Jacobi(1, 0) in
    the other, so ``m`` points per direction integrate total degree
    ``2m - 1`` exactly.
    """
    m = _npoints(required_degree)
    s, ws = np.polynomial.legendre.leggauss(m)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    if m == 1:
        t, wt = np.array([-1.0 / 3.0]), np.array([2.0])
    else:
        t, wt = roots_jacobi(m, 1.0, 0.0)
    t = 0.5 * (t + 1.0)
    wt = 0.25 * wt
    S, T = np.meshgrid(s, t, indexing="ij")
    WS, WT = np.meshgrid(ws, wt, indexing="ij")
    x = S * (1.0 - T)
    y = T
    points = np.column_stack([x.ravel(), y.ravel()])
    weights = (WS * WT).ravel()
    return QuadratureRule(points, weights, 2 * m - 1)


@lru_cache(maxsize=None)
def facet_quadrature(required_degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on the unit reference facet [0, 1]."""
    m = _npoints(required_degree)
    t, w = np.polynomial.legendre.leggauss(m)
    return QuadratureRule(0.5 * (t + 1.0), 0.5 * w, 2 * m - 1)


def map_facet_points(facet_index: int, facet_params) -> np.ndarray:
    """Map parameters t in [0, 1] on facet ``facet_index`` to cell coordinates."""
    if facet_index not in (0, 1, 2):
        raise BadFacetIndex(f"facet index must be 0, 1 or 2, got {facet_index!r}")
    t = np.asarray(facet_params, dtype=float)
    a, b = REFERENCE_TRIANGLE.facet_vertices(facet_index)
    return a + t[..., None] * (b - a)


# ---------------------------------------------------------------------------
# orthogonal expansion basis


def _expansion_indices(k):
    return [(p, q) for total in range(k + 1) for p in range(total + 1) for q in [total - p]]


def _dubiner(k: int, points: np.ndarray, order: int) -> dict:
    """Dubiner basis on the unit triangle with derivatives up to ``order``.

    Returns a dict mapping derivative counts ``(dx, dy)`` to arrays of
    shape (npoints, nbasis).  The collapsed-coordinate singularity is
    avoided by writing ``t^p P_p((2x - t)/t)`` (t = 1 - y) as a polynomial
    through its homogeneous three-term recurrence.
    """
    x = points[:, 0]
    y = points[:, 1]
    t = 1.0 - y
    L = 2.0 * x + y - 1.0
    zero = np.zeros_like(x)
    one = np.ones_like(x)

    # F[p] = [F, Fx, Fy, Fxx, Fxy, Fyy]
    F = [[one, zero, zero, zero, zero, zero]]
    if k >= 1:
        F.append([L, 2.0 * one, one, zero, zero, zero])
    t2 = t * t
    for p in range(1, k):
        A = (2 * p + 1) / (p + 1)
        B = p / (p + 1)
        f, fx, fy, fxx, fxy, fyy = F[p]
        g, gx, gy, gxx, gxy, gyy = F[p - 1]
        F.append([
            A * L * f - B * t2 * g,
            A * (2.0 * f + L * fx) - B * t2 * gx,
            A * (f + L * fy) - B * (-2.0 * t * g + t2 * gy),
            A * (4.0 * fx + L * fxx) - B * t2 * gxx,
            A * (2.0 * fy + fx + L * fxy) - B * (-2.0 * t * gx + t2 * gxy),
            A * (2.0 * fy + L * fyy) - B * (2.0 * g - 4.0 * t * gy + t2 * gyy),
        ])

    s = 2.0 * y - 1.0
    idx = _expansion_indices(k)
    out = {d: np.empty((len(x), len(idx))) for d in _deriv_keys(order)}
    for j, (p, q) in enumerate(idx):
        a = 2 * p + 1
        J = eval_jacobi(q, a, 0, s)
        J1 = 2.0 * (q + a + 1) / 2.0 * eval_jacobi(q - 1, a + 1, 1, s) if q >= 1 else zero
        J2 = (4.0 * (q + a + 1) * (q + a + 2) / 4.0 * eval_jacobi(q - 2, a + 2, 2, s)
              if q >= 2 else zero)
        f, fx, fy, fxx, fxy, fyy = F[p]
        out[(0, 0)][:, j] = f * J
        if order >= 1:
            out[(1, 0)][:, j] = fx * J
            out[(0, 1)][:, j] = fy * J + f * J1
        if order >= 2:
            out[(2, 0)][:, j] = fxx * J
            out[(1, 1)][:, j] = fxy * J + fx * J1
            out[(0, 2)][:, j] = fyy * J + 2.0 * fy * J1 + f * J2
    return out


def _deriv_keys(order):
    return [(a, n - a) for n in range(order + 1) for a in range(n, -1, -1)]


# ---------------------------------------------------------------------------
# elements


@dataclass(frozen=True)
class TabulatedBasis:
    """Reference basis values and derivatives at a set of points.

    ``table[(dx, dy)]`` has shape (npoints, space_dim, value_size).
    """

    table: dict = field(compare=False)

    @property
    def values(self) -> np.ndarray:
        return self.table[(0, 0)]

    @property
    def derivs(self) -> np.ndarray:
        """First derivatives, shape (npoints, space_dim, value_size, 2)."""
        return np.stack([self.table[(1, 0)], self.table[(0, 1)]], axis=-1)

    @property
    def second_derivs(self) -> np.ndarray:
        t = self.table
        row0 = np.stack([t[(2, 0)], t[(1, 1)]], axis=-1)
        row1 = np.stack([t[(1, 1)], t[(0, 2)]], axis=-1)
        return np.stack([row0, row1], axis=-2)

    def derivative(self, counts) -> np.ndarray:
        return self.table[tuple(counts)]


def _lattice_nodes(k: int):
    """Equispaced nodes ordered vertices, facet 0..2 interiors, cell interior.

    Also returns the (entity dim, entity index, position) of each node.
    """
    if k == 0:
        return np.array([[1.0 / 3.0, 1.0 / 3.0]]), [(2, 0, 0)]
    verts = np.array(REFERENCE_TRIANGLE.vertices)
    nodes = [v for v in verts]
    entities = [(0, i, 0) for i in range(3)]
    for f in range(3):
        a, b = REFERENCE_TRIANGLE.facet_vertices(f)
        for m in range(1, k):
            nodes.append(a + (m / k) * (b - a))
            entities.append((1, f, m - 1))
    pos = 0
    for j in range(1, k):
        for i in range(1, k - j):
            nodes.append(np.array([i / k, j / k]))
            entities.append((2, 0, pos))
            pos += 1
    return np.array(nodes), entities


FAMILIES = {"Lagrange": "continuous", "CG": "continuous",
            "Discontinuous Lagrange": "discontinuous", "DG": "discontinuous"}


@dataclass(frozen=True)
class LagrangeElement:
    family: str
    degree: int
    value_shape: tuple = ()

    def __post_init__(self):
        if self.family not in ("continuous", "discontinuous"):
            raise UnsupportedElement(f"unknown family {self.family!r}")
        if self.degree < 0:
            raise UnsupportedDegree(f"negative degree {self.degree}")
        if self.degree > MAX_DEGREE:
            raise UnsupportedDegree(f"degree {self.degree} exceeds {MAX_DEGREE}")
        if self.degree == 0 and self.family == "continuous":
            raise ContinuousDegreeZero("continuous Lagrange elements need degree >= 1")
        if self.value_shape not in ((), (2,)):
            raise UnsupportedElement(f"value shape {self.value_shape} not supported")

    @property
    def value_size(self) -> int:
        return 1 if self.value_shape == () else self.value_shape[0]

    @property
    def scalar_dim(self) -> int:
        k = self.degree
        return (k + 1) * (k + 2) // 2

    @property
    def space_dim(self) -> int:
        return self.value_size * self.scalar_dim

    @property
    def continuous(self) -> bool:
        return self.family == "continuous"

    @property
    def scalar_nodes(self) -> np.ndarray:
        return _lattice_nodes(self.degree)[0]

    @property
    def scalar_entities(self) -> list:
        return _lattice_nodes(self.degree)[1]

    @property
    def sub_elements(self):
        return ((self, 0, 0),)

    def component_degree(self, component: int) -> int:
        return self.degree

    def dof_points(self) -> np.ndarray:
        return np.tile(self.scalar_nodes, (self.value_size, 1))

    def dof_components(self) -> np.ndarray:
        return np.repeat(np.arange(self.value_size), self.scalar_dim)

    def tabulate(self, points, max_deriv_order: int = 0) -> TabulatedBasis:
        return tabulate(self, points, max_deriv_order)

    def __str__(self):
        kind = "Vector" if self.value_shape else ""
        fam = "DG" if self.family == "discontinuous" else "CG"
        return f"{kind}{fam}{self.degree}"


@dataclass(frozen=True)
class MixedElement:
    """Concatenation of sub-elements; dofs and value components are stacked."""

    elements: tuple

    def __post_init__(self):
        if any(isinstance(e, MixedElement) for e in self.elements):
            raise UnsupportedElement("nested mixed elements are not supported")

    @property
    def value_size(self) -> int:
        return sum(e.value_size for e in self.elements)

    @property
    def value_shape(self) -> tuple:
        return (self.value_size,)

    @property
    def space_dim(self) -> int:
        return sum(e.space_dim for e in self.elements)

    @property
    def degree(self) -> int:
        return max(e.degree for e in self.elements)

    @property
    def family(self):
        return None

    @property
    def sub_elements(self):
        out, dof, comp = [], 0, 0
        for e in self.elements:
            out.append((e, dof, comp))
            dof += e.space_dim
            comp += e.value_size
        return tuple(out)

    def component_degree(self, component: int) -> int:
        for e, _, c0 in self.sub_elements:
            if c0 <= component < c0 + e.value_size:
                return e.degree
        raise IndexError(component)

    def dof_points(self) -> np.ndarray:
        return np.vstack([e.dof_points() for e in self.elements])

    def dof_components(self) -> np.ndarray:
        return np.concatenate([e.dof_components() + c0 for e, _, c0 in self.sub_elements])

    def tabulate(self, points, max_deriv_order: int = 0) -> TabulatedBasis:
        return tabulate(self, points, max_deriv_order)

    def __str__(self):
        return "+".join(str(e) for e in self.elements)


def make_lagrange(family: str, degree: int, value_shape=()) -> LagrangeElement:
    """Build a Lagrange element; ``family`` accepts the form-language strings."""
    family = FAMILIES.get(family, family)
    if family == "continuous" and degree == 0:
        raise ContinuousDegreeZero("continuous Lagrange elements need degree >= 1")
    if value_shape in ("scalar", None):
        value_shape = ()
    elif value_shape == "vector":
        value_shape = (2,)
    return LagrangeElement(family, degree, tuple(value_shape))


@lru_cache(maxsize=None)
def _scalar_coefficients(k: int) -> np.ndarray:
    nodes, _ = _lattice_nodes(k)
    V = _dubiner(k, nodes, 0)[(0, 0)]
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > 1e13:
        raise SingularVandermonde(f"Vandermonde for degree {k} has condition number {cond:.3g}")
    return np.linalg.inv(V)


def _tabulate_scalar(k: int, points: np.ndarray, order: int) -> dict:
    C = _scalar_coefficients(k)
    psi = _dubiner(k, points, order)
    return {d: psi[d] @ C for d in psi}


def tabulate(element, points, max_deriv_order: int = 0) -> TabulatedBasis:
    """Tabulate basis values and reference derivatives up to ``max_deriv_order``."""
    if max_deriv_order > MAX_DERIV_ORDER:
        raise UnsupportedDegree(f"derivatives of order {max_deriv_order} are not supported")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    npts = len(points)
    table = {d: np.zeros((npts, element.space_dim, element.value_size))
             for d in _deriv_keys(max_deriv_order)}
    for sub, dof0, comp0 in element.sub_elements:
        scalar = _tabulate_scalar(sub.degree, points, max_deriv_order)
        ns = sub.scalar_dim
        for c in range(sub.value_size):
            rows = slice(dof0 + c * ns, dof0 + (c + 1) * ns)
            for d in table:
                table[d][:, rows, comp0 + c] = scalar[d]
    return TabulatedBasis(table)


def monomial_integral(p: int, q: int) -> float:
    """Exact integral of X^p Y^q over the reference triangle."""
    return math.factorial(p) * math.factorial(q) / math.factorial(p + q + 2)
