from dataclasses import replace

import numpy as np
import pytest

from dgfc.compiler import compile_source
from dgfc.errors import SingularJacobian
from dgfc.integration import IntegrationData, cell_data, pair_data
from dgfc.mesh import cell_geometry
from dgfc.quadrep import AnalyticFunction, build_quad_kernel, count_ops, model_points, model_speedup

from oracles import p1_mass, p1_stiffness, random_cell, random_pair

RIGHT = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

SRC = """
element = FiniteElement("Lagrange", "triangle", 1)
v = TestFunction(element)
u = TrialFunction(element)
f = Function(element)
mass = v*u*dx
stiff = dot(grad(v), grad(u))*dx
zero = 0.0*v*u*dx
load = f*v*dx
"""


@pytest.fixture(scope="module")
def forms():
    return compile_source(SRC)


def quad(cf, measure="dx", key=()):
    return cf.kernel(measure, key, "quadrature")


def test_p1_mass_and_stiffness(forms):
    A, _ = quad(forms["mass"]).evaluate(cell_data(RIGHT[None]))
    assert np.allclose(A[0], np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-15)
    K, _ = quad(forms["stiff"]).evaluate(cell_data(RIGHT[None]))
    assert np.allclose(K[0], [[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]], atol=1e-15)


def test_against_hand_formulas(forms, rng):
    cells = np.array([random_cell(rng) for _ in range(10)])
    M, _ = quad(forms["mass"]).evaluate(cell_data(cells))
    K, _ = quad(forms["stiff"]).evaluate(cell_data(cells))
    for c, Mc, Kc in zip(cells, M, K):
        assert np.allclose(Mc, p1_mass(c), atol=1e-13)
        assert np.allclose(Kc, p1_stiffness(c), atol=1e-12)


def test_zero_integrand(forms):
    A, _ = quad(forms["zero"]).evaluate(cell_data(RIGHT[None]))
    assert np.all(A == 0)


def test_translation_and_scaling(forms):
    k = quad(forms["mass"])
    A0, _ = k.evaluate(cell_data(RIGHT[None]))
    A1, _ = k.evaluate(cell_data((RIGHT + [3.0, -2.0])[None]))
    A2, _ = k.evaluate(cell_data((2.5 * RIGHT)[None]))
    assert np.allclose(A0, A1, atol=1e-15)
    assert np.allclose(A2, 2.5 ** 2 * A0, atol=1e-14)


def test_poisson_facet_block_signs(compile_bundled):
    cf = compile_bundled("poisson", {"element": 0}, {"alpha": 1.0})["a"]
    # two unit right triangles sharing the diagonal
    P = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])
    M = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    A, _ = quad(cf, "dS", (1, 1)).evaluate(pair_data(P[None], M[None], 1, 1))
    A = A[0]
    # only the penalty survives for P0: diagonal blocks positive, coupling blocks negative
    assert A[0, 0] > 0 and A[1, 1] > 0
    assert A[0, 1] == pytest.approx(-A[0, 0]) and A[1, 0] == pytest.approx(-A[1, 1])


def test_analytic_coefficient(forms):
    f = AnalyticFunction(lambda x: x[..., 0] + 2 * x[..., 1])
    k = quad(forms["load"])
    A, _ = k.evaluate(cell_data(RIGHT[None]), {"f": f})
    dofs = np.array([[0.0, 1.0, 2.0]])  # the same linear function, interpolated
    B, _ = k.evaluate(cell_data(RIGHT[None]), {"f": dofs})
    assert np.allclose(A, B, atol=1e-15)


def test_over_integration_does_not_drift(compile_bundled, rng):
    cf = compile_bundled("poisson", {"element": 2})["a"]
    exact = build_quad_kernel(cf.form, "dx")
    over = build_quad_kernel(cf.form, "dx", degree=exact.degree + 6)
    data = cell_data(np.array([random_cell(rng) for _ in range(5)]))
    assert np.abs(exact.evaluate(data)[0] - over.evaluate(data)[0]).max() <= 1e-12


def test_singular_jacobian():
    g = cell_geometry(RIGHT[None])
    flat = replace(g, det=np.zeros(1))
    with pytest.raises(SingularJacobian):
        IntegrationData("dx", flat)


def test_model_values():
    assert model_speedup(2) == 9
    assert model_points(3) == 25
    assert [model_speedup(k) for k in range(1, 6)] == [1, 9, 25, 49, 81]


def test_op_counts(forms, compile_bundled):
    t = count_ops(forms["stiff"].kernel("dx", (), "tensor"), k=1)
    q = count_ops(quad(forms["stiff"]), k=1)
    assert t.flops > 0 and q.flops > 0
    assert q.flops / 10 <= t.flops <= q.flops * 10
    assert t.to_dict()["model_speedup"] == 1.0
    again = count_ops(forms["stiff"].kernel("dx", (), "tensor"), k=1)
    assert again.flops == t.flops


def test_quadrature_flops_grow_with_degree(compile_bundled):
    flops = []
    for k in range(1, 6):
        cf = compile_bundled("laplacian", {"element": k})["a"]
        flops.append(count_ops(quad(cf)).flops_per_entry)
    assert all(b > a for a, b in zip(flops, flops[1:]))
    # superlinear growth in k
    assert flops[4] / flops[0] > 5


def test_modes_agree_on_facets(compile_bundled, rng):
    cf = compile_bundled("advdiff", {"scalar": 2, "vector": 2})["a"]
    for key in cf.kernels("dS"):
        P, M = random_pair(rng, *key)
        data = pair_data(P[None], M[None], *key, {"+": np.array([1.0]), "-": np.array([0.0])})
        c = {("b", "+"): rng.normal(size=(1, 12)), ("b", "-"): rng.normal(size=(1, 12))}
        At, _ = cf.kernel("dS", key, "tensor").evaluate(data, c)
        Aq, _ = cf.kernel("dS", key, "quadrature").evaluate(data, c)
        assert np.abs(At - Aq).max() <= 1e-12 * np.abs(Aq).max()
