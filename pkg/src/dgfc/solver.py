"""Linear solvers for assembled systems."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .assembler import SparseMatrix
from .errors import DimensionMismatch, NoConvergence, NotSymmetric, SingularMatrix

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class LinearSolveReport:
    solution: np.ndarray
    residual_norm: float
    relative_residual: float
    method: str
    iterations: int | None = None


def _operator(A):
    if isinstance(A, SparseMatrix):
        return A
    return SparseMatrix.from_dense(A)


def _report(A: SparseMatrix, b, x, method, iterations=None):
    r = A.matvec(x) - b
    norm = float(np.linalg.norm(r))
    bnorm = float(np.linalg.norm(b))
    return LinearSolveReport(x, norm, norm / bnorm if bnorm > 0 else norm, method, iterations)


def _check_square(A: SparseMatrix, b):
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"matrix of shape {A.shape} is not square")
    if b.shape != (A.shape[0],):
        raise DimensionMismatch(f"right-hand side of length {b.size} for a {A.shape} matrix")


def solve_direct(A, b) -> LinearSolveReport:
    """LU with partial pivoting: dense below DENSE_LIMIT unknowns, sparse above."""
    A = _operator(A)
    b = np.asarray(b, dtype=float)
    _check_square(A, b)
    n = A.shape[0]
    A._ensure()
    if n == 0:
        return LinearSolveReport(np.zeros(0), 0.0, 0.0, "empty")
    counts = np.bincount(A.row_indices()[np.abs(A.data) > 0], minlength=n)
    if np.any(counts == 0):
        raise SingularMatrix(f"row {int(np.argmin(counts))} is zero")
    if n < DENSE_LIMIT:
        import scipy.linalg as sla
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu, piv = sla.lu_factor(A.to_dense(), check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularMatrix(str(exc)) from exc
        d = np.abs(np.diag(lu))
        if d.min() <= 1e-14 * max(d.max(), 1.0):
            raise SingularMatrix("zero pivot in LU factorisation")
        x = sla.lu_solve((lu, piv), b)
        method = "dense-lu"
    else:
        import scipy.sparse.linalg as spla
        try:
            lu = spla.splu(A.to_scipy().tocsc())
        except RuntimeError as exc:
            raise SingularMatrix(str(exc)) from exc
        x = lu.solve(b)
        method = "sparse-lu"
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("factorisation produced non-finite values")
    return _report(A, b, x, method)


def is_symmetric(A: SparseMatrix, tol=1e-12) -> bool:
    A = _operator(A)
    T = A.transpose()
    diff = SparseMatrix(*A.shape)
    diff.add_entries(A.row_indices(), A.indices, A.data)
    diff.add_entries(T.row_indices(), T.indices, -T.data)
    scale = max(A.max_abs(), 1.0)
    return diff.max_abs() <= tol * scale


def solve_cg(A, b, tol=1e-10, max_iter=None) -> LinearSolveReport:
    """Unpreconditioned conjugate gradients for symmetric positive definite systems."""
    A = _operator(A)
    b = np.asarray(b, dtype=float)
    _check_square(A, b)
    if not is_symmetric(A):
        raise NotSymmetric("conjugate gradients needs a symmetric matrix")
    n = A.shape[0]
    max_iter = 10 * n if max_iter is None else max_iter
    x = np.zeros(n)
    r = b.copy()
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return _report(A, b, x, "cg", 0)
    p = r.copy()
    rr = r @ r
    for it in range(1, max_iter + 1):
        Ap = A.matvec(p)
        pAp = p @ Ap
        if pAp <= 0:
            raise NoConvergence(f"matrix is not positive definite (p.Ap = {pAp:.3g})")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        if np.sqrt(rr_new) <= tol * bnorm:
            rep = _report(A, b, x, "cg", it)
            if rep.relative_residual <= tol * 10:
                return rep
            r = b - A.matvec(x)
            rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise NoConvergence(f"no convergence to {tol:g} in {max_iter} iterations")
