import numpy as np
import pytest

from dgfc.compiler import compile_source
from dgfc.errors import DegreeOverflow, MissingSide, ShapeMismatch
from dgfc.integration import IntegrationData, cell_data, pair_data
from dgfc.mesh import cell_geometry
from dgfc.tensorrep import (GeometryRecipe, build_interior_facet_kernels, contract, eval_geometry,
                            reference_tensor)

from oracles import p1_stiffness, random_cell, random_pair, relative_error

RIGHT = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

LAPLACE = """
element = FiniteElement("Lagrange", "triangle", 1)
v = TestFunction(element)
u = TrialFunction(element)
w = Function(element)
a = dot(grad(v), grad(u))*dx
aw = w*dot(grad(v), grad(u))*dx
"""

P0_JUMP = """
element = FiniteElement("Discontinuous Lagrange", "triangle", 0)
v = TestFunction(element)
u = TrialFunction(element)
a = jump(v)*jump(u)*dS
b = v*u*ds
"""


@pytest.fixture(scope="module")
def laplace():
    return compile_source(LAPLACE)


def test_p1_laplacian_reference_tensor(laplace):
    k = laplace["a"].kernel("dx")
    A0 = np.zeros((3, 3, 2, 2))
    for ref, _ in k.terms:
        d0, d1 = (f[4] for f in ref.signature)
        A0[:, :, d0.index(1), d1.index(1)] = ref.A0
    g = np.array([[-1, -1], [1, 0], [0, 1]], dtype=float)
    assert np.allclose(A0, 0.5 * np.einsum("ia,jb->ijab", g, g), atol=1e-14)
    assert A0[1, 1, 0, 0] == pytest.approx(0.5)


def test_identity_geometry_gives_delta(laplace):
    k = laplace["a"].kernel("dx")
    data = cell_data(RIGHT[None])
    for ref, recipe in k.terms:
        G, _ = eval_geometry(recipe, data, {})
        d0, d1 = (f[4] for f in ref.signature)
        assert G[0] == pytest.approx(1.0 if d0 == d1 else 0.0, abs=1e-15)
    A, _ = k.evaluate(data)
    assert np.allclose(A[0], [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-14)


def test_laplacian_on_random_cells(laplace, rng):
    k = laplace["a"].kernel("dx")
    cells = np.array([random_cell(rng) for _ in range(20)])
    A, _ = k.evaluate(cell_data(cells))
    for c, Ac in zip(cells, A):
        assert relative_error(Ac, p1_stiffness(c)) <= 1e-12


def test_weighted_laplacian_linear_in_weight(laplace, rng):
    cells = np.array([random_cell(rng) for _ in range(5)])
    data = cell_data(cells)
    A, _ = laplace["a"].kernel("dx").evaluate(data)
    Aw, _ = laplace["aw"].kernel("dx").evaluate(data, {"w": np.ones((5, 3))})
    assert np.allclose(A, Aw, atol=1e-13)
    A3, _ = laplace["aw"].kernel("dx").evaluate(data, {"w": 3.0 * np.ones((5, 3))})
    assert np.allclose(A3, 3 * A, atol=1e-12)


def test_scale_invariance_of_laplacian(laplace, rng):
    c = random_cell(rng)
    k = laplace["a"].kernel("dx")
    A1, _ = k.evaluate(cell_data(c[None]))
    A2, _ = k.evaluate(cell_data((7.5 * c)[None]))
    assert np.allclose(A1, A2, atol=1e-12)


def test_nine_interior_facet_slots():
    cf = compile_source(P0_JUMP)["a"]
    kernels = cf.kernels("dS")
    assert sorted(kernels) == [(i, j) for i in range(3) for j in range(3)]
    for key, k in kernels.items():
        assert k.shape == (2, 2)
        # reference facet has unit length: summing the terms gives the bare sign pattern
        total = sum(ref.A0 * sum(c for c, _ in recipe.terms) for ref, recipe in k.terms)
        assert np.allclose(total, [[1, -1], [-1, 1]], atol=1e-14)


def test_p0_exterior_facet_integral():
    cf = compile_source(P0_JUMP)["b"]
    assert sorted(cf.kernels("ds")) == [(0,), (1,), (2,)]
    for (f,), k in cf.kernels("ds").items():
        assert k.stacked.reshape(()) == pytest.approx(1.0)
        A, _ = k.evaluate(cell_data(RIGHT[None], f))
        assert A[0, 0, 0] == pytest.approx([np.sqrt(2), 1.0, 1.0][f])


def test_vanishing_trace_rows():
    src = 'element = FiniteElement("Lagrange", "triangle", 1)\nv = TestFunction(element)\n' \
          'u = TrialFunction(element)\na = v*u*ds\n'
    cf = compile_source(src)["a"]
    for (f,), k in cf.kernels("ds").items():
        A, _ = k.evaluate(cell_data(RIGHT[None], f))
        assert np.allclose(A[0, f, :], 0) and np.allclose(A[0, :, f], 0)


def test_one_sided_monomial_fills_one_block():
    src = 'element = FiniteElement("Discontinuous Lagrange", "triangle", 1)\nv = TestFunction(element)\n' \
          'u = TrialFunction(element)\na = v(\'+\')*u(\'+\')*dS\n'
    cf = compile_source(src)["a"]
    for k in cf.kernels("dS").values():
        block = k.stacked.reshape(6, 6)
        assert np.abs(block[:3, :3]).max() > 0
        assert np.allclose(block[3:, :], 0) and np.allclose(block[:, 3:], 0)


def test_interior_facet_kernel_needs_minus_side(compile_bundled, rng):
    k = compile_bundled("poisson", {"element": 1})["a"].kernel("dS", (0, 0))
    data = IntegrationData("dS", cell_geometry(random_cell(rng)[None]), None, 0, 0, {})
    with pytest.raises(MissingSide):
        k.evaluate(data)


def test_symmetric_forms_give_symmetric_tensors(compile_bundled, rng):
    for name, over in (("poisson", {"element": 2}), ("biharmonic", {"element": 2})):
        cf = compile_bundled(name, over)["a"]
        cells = np.array([random_cell(rng) for _ in range(4)])
        A, _ = cf.kernel("dx").evaluate(cell_data(cells))
        assert np.abs(A - A.transpose(0, 2, 1)).max() <= 1e-12 * np.abs(A).max()
        for key in cf.kernels("dS"):
            P, M = random_pair(rng, *key)
            A, _ = cf.kernel("dS", key).evaluate(pair_data(P[None], M[None], *key))
            assert np.abs(A - A.transpose(0, 2, 1)).max() <= 1e-12 * np.abs(A).max()


def test_contract_examples():
    A0 = np.arange(24.0).reshape(2, 3, 4)
    assert np.allclose(contract(A0, np.zeros(4)), 0)
    assert np.allclose(contract(A0[..., :1], np.array([2.0])), 2 * A0[..., 0])
    with pytest.raises(ShapeMismatch):
        contract(A0, np.ones(3))


def test_degree_overflow():
    el_src = 'element = FiniteElement("Discontinuous Lagrange", "triangle", 15)\nv = TestFunction(element)\n' \
             'u = TrialFunction(element)\nw = Function(element)\nz = Function(element)\n' \
             'y = Function(element)\na = w*z*y*v*u*dx\n'
    with pytest.raises(DegreeOverflow):
        compile_source(el_src)["a"].kernel("dx")
