import numpy as np
import pytest

from dgfc.assembler import SparseMatrix, assemble_form
from dgfc.errors import NoConvergence, NotSymmetric, SingularMatrix
from dgfc.mesh import unit_square
from dgfc.solver import DENSE_LIMIT, is_symmetric, solve_cg, solve_direct

from oracles import gauss_eliminate


def test_identity(rng):
    b = rng.normal(size=8)
    rep = solve_direct(SparseMatrix.from_dense(np.eye(8)), b)
    assert np.allclose(rep.solution, b) and rep.residual_norm == 0.0


def test_matches_elimination_oracle(rng):
    A = rng.normal(size=(50, 50))
    A += np.diag(np.abs(A).sum(axis=1))
    b = rng.normal(size=50)
    rep = solve_direct(A, b)
    assert np.abs(rep.solution - gauss_eliminate(A, b)).max() <= 1e-10
    assert rep.relative_residual <= 1e-10


def test_zero_row_is_singular():
    A = np.eye(4)
    A[2, 2] = 0.0
    with pytest.raises(SingularMatrix):
        solve_direct(A, np.ones(4))


def test_rank_deficient_is_singular():
    A = np.ones((3, 3))
    with pytest.raises(SingularMatrix):
        solve_direct(A, np.ones(3))


def test_sparse_path(rng):
    n = DENSE_LIMIT + 10
    m = SparseMatrix(n, n)
    i = np.arange(n)
    m.add_entries(i, i, 4.0 + rng.uniform(size=n))
    m.add_entries(i[1:], i[:-1], -np.ones(n - 1))
    m.add_entries(i[:-1], i[1:], -np.ones(n - 1))
    b = rng.normal(size=n)
    rep = solve_direct(m, b)
    assert rep.method == "sparse-lu" and rep.relative_residual <= 1e-12


def test_cg_finite_termination():
    A = np.diag(np.arange(1.0, 11.0))
    b = np.ones(10)
    rep = solve_cg(A, b, tol=1e-14)
    assert rep.iterations <= 10
    assert np.allclose(rep.solution, 1 / np.arange(1.0, 11.0))


def test_cg_rejects_nonsymmetric():
    with pytest.raises(NotSymmetric):
        solve_cg(np.array([[2.0, 1.0], [0.0, 2.0]]), np.ones(2))
    assert not is_symmetric(SparseMatrix.from_dense([[2.0, 1.0], [0.0, 2.0]]))


def test_cg_iteration_limit():
    A = np.diag(np.arange(1.0, 101.0))
    with pytest.raises(NoConvergence):
        solve_cg(A, np.ones(100), tol=1e-14, max_iter=3)


def test_cg_on_sip_poisson_agrees_with_direct(compile_bundled):
    cf = compile_bundled("poisson", {"element": 1})
    mesh = unit_square(8)
    A = assemble_form(cf["a"], mesh)
    f = np.ones(A.shape[0])
    b = assemble_form(cf["L"], mesh, {"f": f})
    it = solve_cg(A, b, tol=1e-12)
    assert it.relative_residual <= 1e-10
    direct = solve_direct(A, b)
    assert np.abs(it.solution - direct.solution).max() <= 1e-8
