"""Model problems with manufactured solutions, error functionals and convergence studies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
import sympy as sp

from . import form_source
from .assembler import SparseMatrix, assemble_form
from .compiler import compile_source
from .dofmap import boundary_dofs, build_dofmap, interpolate
from .mesh import geometry, mesh_size, unit_square
from .quadrep import AnalyticFunction
from .refelem import make_lagrange
from .solver import solve_direct

PROBLEMS = ("poisson", "advdiff", "stokes", "biharmonic", "norms")
DEFAULT_ALPHA = {"poisson": 32.0, "advdiff": 20.0, "stokes": 4.0}
BIHARMONIC_ALPHA = {2: 4.0, 3: 16.0, 4: 16.0}
DEFAULT_DEGREE = {"poisson": 1, "advdiff": 3, "stokes": 1, "biharmonic": 2, "norms": 1}

X, Y = sp.symbols("x y")
SINE = sp.sin(sp.pi * X) * sp.sin(sp.pi * Y)


def default_alpha(problem: str, degree: int) -> float:
    if problem == "biharmonic":
        return BIHARMONIC_ALPHA.get(degree, 16.0)
    return DEFAULT_ALPHA.get(problem, 32.0)


@dataclass
class RunManifest:
    problem: str
    degree: int | None = None
    alpha: float | None = None
    kappa: float = 0.2
    nu: float = 1.0
    b: tuple = (1.0, 0.5)
    resolutions: tuple = (8,)
    mode: str = "tensor"
    interpolation_degree: int | None = None  # None: analytic exact solution in error forms
    out: str | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ValueError(f"unknown problem {self.problem!r}; expected one of {PROBLEMS}")
        if self.degree is None:
            self.degree = DEFAULT_DEGREE[self.problem]
        if self.alpha is None:
            self.alpha = default_alpha(self.problem, self.degree)
        if self.alpha <= 0:
            raise ValueError("penalty parameter alpha must be positive")
        self.resolutions = tuple(int(r) for r in self.resolutions)
        if any(b <= a for a, b in zip(self.resolutions, self.resolutions[1:])):
            raise ValueError("resolutions must be strictly increasing")
        if self.mode not in ("tensor", "quadrature"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class DemoResult:
    problem: str
    resolution: int
    h_max: float
    dim: int
    residual: float
    L2_error: float
    seminorm_error: float
    solution: np.ndarray = field(repr=False, default=None)
    extra: dict = field(default_factory=dict)


# symbolic helpers ----------------------------------------------------------------

def analytic(expr) -> AnalyticFunction:
    """Vectorised value, gradient and Hessian of a sympy expression (or list) in x, y."""
    exprs = list(expr) if isinstance(expr, (list, tuple)) else [expr]
    grads = [[sp.diff(e, v) for v in (X, Y)] for e in exprs]
    hesses = [[[sp.diff(e, a, b) for b in (X, Y)] for a in (X, Y)] for e in exprs]
    fv = sp.lambdify((X, Y), exprs, "numpy")
    fg = sp.lambdify((X, Y), grads, "numpy")
    fh = sp.lambdify((X, Y), hesses, "numpy")
    vector = isinstance(expr, (list, tuple))

    def wrap(f, extra):
        def call(p):
            p = np.asarray(p, dtype=float)
            raw = f(p[:, 0], p[:, 1])
            arr = np.stack([np.broadcast_to(np.asarray(v, dtype=float), (len(p),))
                            for v in _flatten(raw)], axis=-1)
            arr = arr.reshape((len(p), len(exprs)) + extra)
            return arr if vector else arr[:, 0]
        return call
    shape = (len(exprs),) if vector else ()
    return AnalyticFunction(wrap(fv, ()), wrap(fg, (2,)), wrap(fh, (2, 2)), shape)


def _flatten(nested):
    if isinstance(nested, (list, tuple)):
        return [x for item in nested for x in _flatten(item)]
    return [nested]


def laplacian(e):
    return sp.diff(e, X, 2) + sp.diff(e, Y, 2)


def h_max(mesh) -> float:
    return float(mesh_size(geometry(mesh)).max())


# error functionals ----------------------------------------------------------------

def _error_forms(element_uh, exact_degree, interpolate_exact):
    el_u = make_lagrange("Lagrange", exact_degree)
    over = {"element_u": el_u, "element_uh": element_uh}
    l2 = compile_source(form_source("l2norm"), elements=over)["M"]
    semi = compile_source(form_source("seminorm"), elements=over)["M"]
    return l2, semi, el_u


def error_norms(mesh, element_uh, uh, exact, mode="quadrature", interpolation_degree=None,
                exact_degree=None):
    """(L2 error, broken seminorm error) of ``uh`` against ``exact`` (a sympy expression).

    The exact solution enters as an analytic coefficient (quadrature mode) or,
    with ``interpolation_degree`` set, as its continuous Lagrange interpolant.
    """
    deg = interpolation_degree or exact_degree or (element_uh.degree + 3)
    l2, semi, el_u = _error_forms(element_uh, deg, interpolation_degree is not None)
    if interpolation_degree is None:
        u = analytic(exact)
        mode = "quadrature"
    else:
        u = interpolate(analytic(exact), el_u, mesh)
    coefs = {"u": u, "u_h": uh}
    e2 = assemble_form(l2, mesh, coefs, mode=mode)
    s2 = assemble_form(semi, mesh, coefs, mode=mode)
    return math.sqrt(max(e2, 0.0)), math.sqrt(max(s2, 0.0))


# problems ---------------------------------------------------------------------------

def _solve(A, b, free=None):
    if free is None:
        return solve_direct(A, b)
    return solve_direct(A.submatrix(free, free), b[free])


def poisson(degree=1, alpha=32.0, nx=8, mode="tensor", interpolation_degree=None, exact=SINE):
    mesh = unit_square(nx)
    forms = compile_source(form_source("poisson"), elements={"element": degree},
                           constants={"alpha": alpha})
    el = forms["a"].elements[0]
    f = interpolate(analytic(-laplacian(exact)), el, mesh)
    A = assemble_form(forms["a"], mesh, mode=mode)
    b = assemble_form(forms["L"], mesh, {"f": f}, mode=mode)
    rep = _solve(A, b)
    e, s = error_norms(mesh, el, rep.solution, exact, mode, interpolation_degree)
    return DemoResult("poisson", nx, h_max(mesh), len(b), rep.residual_norm, e, s, rep.solution,
                      {"matrix": A, "rhs": b, "mesh": mesh})


def advdiff(degree=3, alpha=20.0, nx=8, kappa=0.2, b=(1.0, 0.5), mode="tensor",
            interpolation_degree=None, exact=SINE):
    mesh = unit_square(nx)
    forms = compile_source(form_source("advdiff"),
                           elements={"scalar": degree, "vector": max(degree, 1)},
                           constants={"kappa": kappa, "alpha": alpha})
    a, L = forms["a"], forms["L"]
    el = a.elements[0]
    bvec = [sp.sympify(c) for c in b]
    source = -kappa * laplacian(exact) + sp.diff(bvec[0] * exact, X) + sp.diff(bvec[1] * exact, Y)
    vel_el = a.coefficient_elements["b"]
    bdofs = interpolate(analytic(bvec), vel_el, mesh)
    f = interpolate(analytic(source), el, mesh)
    A = assemble_form(a, mesh, {"b": bdofs}, mode=mode, velocity="b")
    rhs = assemble_form(L, mesh, {"f": f}, mode=mode)
    rep = _solve(A, rhs)
    e, s = error_norms(mesh, el, rep.solution, exact, mode, interpolation_degree)
    return DemoResult("advdiff", nx, h_max(mesh), len(rhs), rep.residual_norm, e, s, rep.solution,
                      {"matrix": A, "rhs": rhs, "mesh": mesh})


STOKES_ERROR_FORM = """
V = VectorElement("Discontinuous Lagrange", "triangle", 1)
Q = FiniteElement("Lagrange", "triangle", 1)
element = V + Q
E = VectorElement("Lagrange", "triangle", 4)
P = FiniteElement("Lagrange", "triangle", 4)

w = Function(element)
u = Function(E)
p = Function(P)

eu0 = u[0] - w[0]
eu1 = u[1] - w[1]
ep = p - w[2]
M = (eu0*eu0 + eu1*eu1)*dx
Mp = ep*ep*dx
"""

MEAN_PRESSURE_FORM = """
V = VectorElement("Discontinuous Lagrange", "triangle", 1)
Q = FiniteElement("Lagrange", "triangle", 1)
element = V + Q
(v, q) = TestFunctions(element)
c = q*dx
"""


def stokes_exact():
    psi = sp.sin(sp.pi * X) ** 2 * sp.sin(sp.pi * Y) ** 2
    u = [sp.diff(psi, Y), -sp.diff(psi, X)]
    p = sp.cos(sp.pi * X) * sp.cos(sp.pi * Y)
    return u, p


def _kernel_bases(A, nvel, tol=1e-10):
    """Left and right kernels of the saddle-point matrix.

    The velocity block K is nonsingular, so right kernel vectors are (-K^-1 C p, p)
    with p in the kernel of the small pressure Schur complement Bq K^-1 C; left
    kernel vectors have zero velocity part and p^T Bq = 0.
    """
    M = A.to_scipy().tocsc()
    K, C, Bq = M[:nvel, :nvel], M[:nvel, nvel:], M[nvel:, :nvel]
    KinvC = spla.splu(K).solve(C.toarray())
    S = Bq @ KinvC
    n = A.shape[0]

    def kernel(mat):
        _, s, vt = np.linalg.svd(mat)
        return vt[s <= tol * s[0]].T

    pl = kernel(Bq.toarray() @ Bq.toarray().T)
    left = np.zeros((n, pl.shape[1]))
    left[nvel:] = pl
    pr = kernel(S)
    right = np.vstack([-KinvC @ pr, pr])
    return left, right


def stokes(degree=1, alpha=4.0, nx=8, nu=1.0, mode="tensor", pressure_degree=None, **_):
    """Stokes flow with a zero-mean pressure enforced through a bordered system."""
    if nu != 1.0:
        raise ValueError("the bundled Stokes form has unit viscosity")
    j = pressure_degree or degree
    mesh = unit_square(nx)
    velocity = make_lagrange("Discontinuous Lagrange", degree, (2,))
    pressure = make_lagrange("Lagrange", j)
    over = {"V": velocity, "Q": pressure}
    forms = compile_source(form_source("stokes"), elements=over, constants={"alpha": alpha})
    a, L = forms["a"], forms["L"]
    u, p = stokes_exact()
    f = [-nu * laplacian(u[i]) + sp.diff(p, v) for i, v in enumerate((X, Y))]
    fdofs = interpolate(analytic(f), velocity, mesh)
    A = assemble_form(a, mesh, mode=mode)
    rhs = assemble_form(L, mesh, {"f": fdofs}, mode=mode)
    c = assemble_form(compile_source(MEAN_PRESSURE_FORM, elements=over)["c"], mesh, mode=mode)
    n = A.shape[0]
    nvel = mesh.num_cells * velocity.space_dim
    left, right = _kernel_bases(A, nvel)
    k = left.shape[1]
    # constraint rows: zero mean pressure, and no component along the kernel
    # directions that carry zero mean (a basis-independent choice)
    _, _, vt = np.linalg.svd((c @ right)[None, :])
    Z = np.column_stack([c, right @ vt[1:].T])
    big = SparseMatrix(n + k, n + k)
    big.add_entries(A.row_indices(), A.indices, A.data)
    for j in range(k):
        for vec, transpose in ((left[:, j], False), (Z[:, j], True)):
            nz = np.flatnonzero(np.abs(vec) > 1e-14)
            if transpose:
                big.add_entries(np.full(len(nz), n + j), nz, vec[nz])
            else:
                big.add_entries(nz, np.full(len(nz), n + j), vec[nz])
    big.finalize()
    rep = solve_direct(big, np.r_[rhs, np.zeros(k)])
    w = rep.solution[:n]
    err_forms = compile_source(STOKES_ERROR_FORM, elements=over)
    coefs = {"w": w, "u": analytic(u), "p": analytic(p)}
    eu = math.sqrt(max(assemble_form(err_forms["M"], mesh, coefs, mode="quadrature"), 0.0))
    ep = math.sqrt(max(assemble_form(err_forms["Mp"], mesh, coefs, mode="quadrature"), 0.0))
    resid = float(np.linalg.norm(A.matvec(w) - rhs))
    return DemoResult("stokes", nx, h_max(mesh), n, rep.residual_norm, eu, float("nan"), w,
                      {"matrix": A, "rhs": rhs, "mesh": mesh, "pressure_L2_error": ep,
                       "unbordered_residual": resid, "pressure_null_modes": k})


def biharmonic(degree=2, alpha=None, nx=8, mode="tensor", interpolation_degree=None, exact=SINE):
    """C0 interior penalty biharmonic problem; u = 0 imposed on boundary dofs."""
    alpha = default_alpha("biharmonic", degree) if alpha is None else alpha
    mesh = unit_square(nx)
    forms = compile_source(form_source("biharmonic"), elements={"element": degree},
                           constants={"alpha": alpha})
    el = forms["a"].elements[0]
    dm = build_dofmap(el, mesh)
    f = interpolate(analytic(laplacian(laplacian(exact))), el, mesh, dm)
    A = assemble_form(forms["a"], mesh, mode=mode, dofmaps=(dm, dm))
    b = assemble_form(forms["L"], mesh, {"f": f}, mode=mode, dofmaps=(dm,))
    free = np.setdiff1d(np.arange(dm.dim), boundary_dofs(dm, mesh))
    rep = _solve(A, b, free)
    U = np.zeros(dm.dim)
    U[free] = rep.solution
    e, s = error_norms(mesh, el, U, exact, mode, interpolation_degree)
    return DemoResult("biharmonic", nx, h_max(mesh), len(free), rep.residual_norm, e, s, U,
                      {"matrix": A, "rhs": b, "mesh": mesh, "dofmap": dm})


def norms(degree=1, nx=8, mode="tensor", interpolation_degree=None, exact=SINE, **_):
    """Error functionals of the interpolant of the exact solution itself."""
    mesh = unit_square(nx)
    el = make_lagrange("Discontinuous Lagrange", degree)
    uh = interpolate(analytic(exact), el, mesh)
    e, s = error_norms(mesh, el, uh, exact, mode, interpolation_degree)
    return DemoResult("norms", nx, h_max(mesh), len(uh), 0.0, e, s, uh, {"mesh": mesh})


DRIVERS = {"poisson": poisson, "advdiff": advdiff, "stokes": stokes, "biharmonic": biharmonic,
           "norms": norms}


def run(manifest: RunManifest, resolution: int) -> DemoResult:
    kw = {"degree": manifest.degree, "nx": resolution, "mode": manifest.mode}
    if manifest.problem != "norms":
        kw["alpha"] = manifest.alpha
    if manifest.problem == "advdiff":
        kw.update(kappa=manifest.kappa, b=manifest.b)
    if manifest.problem == "stokes":
        kw["nu"] = manifest.nu
    else:
        kw["interpolation_degree"] = manifest.interpolation_degree
    return DRIVERS[manifest.problem](**kw)


@dataclass(frozen=True)
class ConvergenceRow:
    resolution: int
    h_max: float
    L2_error: float
    seminorm_error: float
    L2_rate: float | None
    seminorm_rate: float | None


CSV_COLUMNS = ("resolution", "h_max", "L2_error", "seminorm_error", "L2_rate", "seminorm_rate")


def observed_rate(e_coarse, e_fine, h_coarse, h_fine):
    if not (e_coarse > 0 and e_fine > 0):
        return None
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def convergence(manifest: RunManifest) -> list:
    rows = []
    prev = None
    for r in manifest.resolutions:
        res = run(manifest, r)
        if prev is None:
            l2r = sr = None
        else:
            l2r = observed_rate(prev.L2_error, res.L2_error, prev.h_max, res.h_max)
            sr = observed_rate(prev.seminorm_error, res.seminorm_error, prev.h_max, res.h_max)
        rows.append(ConvergenceRow(r, res.h_max, res.L2_error, res.seminorm_error, l2r, sr))
        prev = res
    return rows


def rows_to_csv(rows) -> str:
    def fmt(v):
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return ""
        return f"{v:.10g}" if isinstance(v, float) else str(v)
    lines = [",".join(CSV_COLUMNS)]
    lines += [",".join(fmt(getattr(r, c)) for c in CSV_COLUMNS) for r in rows]
    return "\n".join(lines) + "\n"
