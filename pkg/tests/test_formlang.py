import pytest
from hypothesis import given, settings, strategies as st

from dgfc import form_source
from dgfc.errors import (FormSyntaxError, NonAffineDivision, RankError, RestrictionError, SemanticError,
                         ShapeMismatch, UnknownIdentifier, UnsupportedExpression)
from dgfc.formlang import check, expand, format_file, parse
from dgfc.formlang import exprs as E
from dgfc.formlang.syntax import Assign, BinOp, Call, FormFile, Index, Name, Neg, Num, Restrict

HEADER = """
element = FiniteElement("Discontinuous Lagrange", "triangle", 1)
vector = VectorElement("Discontinuous Lagrange", "triangle", 1)
v = TestFunction(element)
u = TrialFunction(element)
w = Function(element)
b = Function(vector)
n = FacetNormal("triangle")
h = MeshSize("triangle")
"""


def typed(body, **kw):
    return check(parse(HEADER + body), **kw)


def test_poisson_structure():
    ff = check(parse(form_source("poisson")))
    a, L = ff["a"], ff["L"]
    assert a.rank == 2 and L.rank == 1
    measures = [i.measure for i in a.integrals]
    assert len(measures) == 7
    assert measures.count("dS") == 3 and measures.count("ds") == 3 and measures.count("dx") == 1
    assert [i.measure for i in L.integrals] == ["dx"]
    assert ff.constants["alpha"] == 32.0


def test_mass_form():
    a = typed("a = v*u*dx")["a"]
    assert a.rank == 2 and len(a.integrals) == 1


def test_jump_in_cell_integral_rejected():
    with pytest.raises(SemanticError):
        typed("a = jump(v)*jump(u)*dx")


def test_unrestricted_argument_in_interior_facet():
    with pytest.raises(RestrictionError):
        typed("a = v*u('+')*dS")


def test_shape_rules():
    ff = typed("a = dot(jump(v, n), avg(grad(u)))*dS")
    assert ff["a"].rank == 2 and ff["a"].integrals[0].integrand.shape == ()
    stokes = check(parse(form_source("stokes")))
    assert stokes["a"].rank == 2
    with pytest.raises(ShapeMismatch):
        typed("a = dot(v, grad(u))*dx")
    with pytest.raises(ShapeMismatch):
        typed("a = grad(v)*grad(u)*dx")


def test_rank_and_linearity():
    with pytest.raises(SemanticError):
        typed("a = v*v*dx")
    with pytest.raises(SemanticError):
        typed("a = v*u*dx + v*dx")
    assert typed("M = w*w*dx")["M"].rank == 0


def test_rank_above_two_rejected():
    src = HEADER + "z = TestFunction(element)\n"
    with pytest.raises((RankError, SemanticError)):
        check(parse(src.replace("z = TestFunction", "z = TrialFunction") + "a = v*u*z*dx"))


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        typed("a = v*q*dx")


def test_division_only_by_geometry():
    assert typed("a = 2.0/h*v*u*ds")["a"].rank == 2
    with pytest.raises((SemanticError, NonAffineDivision)):
        expand(typed("a = v*u/w*dx")["a"])


def test_triangle_only():
    with pytest.raises(UnsupportedExpression):
        check(parse('element = FiniteElement("Lagrange", "tetrahedron", 1)\nv = TestFunction(element)\n'
                    'a = v*dx'))


def test_syntax_error_has_position():
    with pytest.raises(FormSyntaxError) as info:
        parse("a = v*(*dx\n")
    assert info.value.line == 1 and info.value.column == 8
    assert info.value.expected


def test_constant_and_element_overrides():
    ff = check(parse(form_source("poisson")), elements={"element": 3}, constants={"alpha": 4.0})
    assert ff["a"].elements[0].degree == 3
    assert ff.constants["alpha"] == 4.0


def test_check_is_idempotent():
    ff = check(parse(form_source("advdiff")))
    assert check(ff) is ff


def _factors(m, kind):
    return [f for f in m.factors if f[0] == kind]


def test_jump_jump_expansion_signs():
    ms = expand(typed("a = jump(v)*jump(u)*dS")["a"]).monomials["dS"]
    assert len(ms) == 4
    signs = {tuple(f[2] for f in _factors(m, "arg")): m.coeff for m in ms}
    assert signs == {("+", "+"): 1.0, ("+", "-"): -1.0, ("-", "+"): -1.0, ("-", "-"): 1.0}


def test_avg_grad_jump_expansion():
    ms = expand(typed("a = dot(avg(grad(v)), jump(u, n))*dS")["a"]).monomials["dS"]
    sides = {tuple(f[2] for f in sorted(_factors(m, "arg"), key=lambda f: f[1])) for m in ms}
    assert sides == {("+", "+"), ("+", "-"), ("-", "+"), ("-", "-")}
    for m in ms:
        assert abs(m.coeff) == 0.5
        assert len(_factors(m, "n")) == 1 and len(_factors(m, "K")) == 1


def test_weighted_laplacian_factors():
    ms = expand(check(parse(form_source("weighted_laplacian")))["a"]).monomials["dx"]
    # 2 x 2 reference directions for each argument, summed over the physical index
    assert len(ms) == 8
    for m in ms:
        assert len(_factors(m, "K")) == 2 and len(_factors(m, "coef")) == 1
        assert [f[4] for f in _factors(m, "coef")] == [(0, 0)]
        assert all(sum(f[4]) == 1 for f in _factors(m, "arg"))


def test_expansion_has_only_monomial_factors():
    for name in ("poisson", "advdiff", "stokes", "biharmonic", "l2norm", "seminorm"):
        for form in check(parse(form_source(name))).forms.values():
            for ms in expand(form).monomials.values():
                for m in ms:
                    assert all(f[0] in ("arg", "coef", "K", "n", "of", "h") for f in m.factors)


def test_exterior_jump_conventions():
    a = typed("a = dot(jump(v, n), jump(u, n))*ds")["a"]
    b = typed("a = v*u*dot(n, n)*ds")["a"]
    assert expand(a).monomials == expand(b).monomials


def test_upwind_indicator_is_builtin():
    a = typed("a = dot(jump(v, n), mult(b('+'), of('+')*u('+') + of('-')*u('-')))*dS")["a"]
    assert any(isinstance(x, E.FacetIndicator) for i in a.integrals for x in E.traverse(i.integrand))


# round trip of the printer ---------------------------------------------------------

names = st.sampled_from(["v", "u", "w", "h", "n", "alpha", "dx", "dS"])
nums = st.one_of(st.integers(0, 999).map(float), st.sampled_from([0.5, 2.25, 32.0, 1e-3]))


def _extend(children):
    return st.one_of(
        st.builds(BinOp, st.sampled_from(["+", "-", "*", "/"]), children, children),
        st.builds(Neg, children),
        st.builds(Call, st.sampled_from(["dot", "mult", "jump", "avg", "grad", "div"]),
                  st.lists(children, min_size=1, max_size=2).map(tuple)),
        st.builds(Restrict, st.one_of(names.map(Name), st.builds(Call, st.just("grad"),
                                                                  names.map(lambda s: (Name(s),)))),
                  st.sampled_from(["+", "-"])),
        st.builds(Index, names.map(Name), st.integers(0, 3)),
    )


exprs = st.recursive(st.one_of(names.map(Name), nums.map(Num)), _extend, max_leaves=12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["a", "L", "M", "tmp"]), exprs), min_size=1, max_size=4))
def test_print_parse_round_trip(stmts):
    ff = FormFile(tuple(Assign((t,), e) for t, e in stmts))
    text = format_file(ff)
    again = parse(text)
    assert again.statements == ff.statements
    assert format_file(again) == text


def test_bundled_forms_round_trip():
    for name in ("poisson", "advdiff", "stokes", "biharmonic", "l2norm", "seminorm", "jump"):
        ff = parse(form_source(name))
        assert parse(format_file(ff)).statements == ff.statements
