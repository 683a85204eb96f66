"""Emit standalone Python source for compiled element-tensor kernels.

Every emitted module imports only ``math`` and defines

    tabulate_tensor(coordinates, coefficients, facets=(), indicators=(1.0, 0.0))

* ``coordinates``: flat list of vertex coordinates, ``[x0, y0, x1, y1, x2, y2]``
  for one cell, twelve numbers (plus cell, then minus cell) for interior facets.
* ``coefficients``: mapping from coefficient name to its local dofs; interior
  facet kernels expect the plus-cell dofs followed by the minus-cell dofs.
* ``facets``: the local facet numbers of the slot (checked, not dispatched on).
* ``indicators``: values of the facet indicator on the plus and minus sides.

The result is the element tensor as a flat row-major list.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .refelem import REFERENCE_BARYCENTRIC_GRADIENTS, REFERENCE_TRIANGLE, tabulate
from .tensorrep import contraction_flops, kernel_keys

MAX_TERMS = 64
MEASURE_ORDER = ("dx", "ds", "dS")


def _lit(v) -> str:
    s = format(float(v), ".17g")
    if s in ("nan", "inf", "-inf"):
        raise ValueError(f"cannot emit non-finite literal {s}")
    if not any(ch in s for ch in ".e"):
        s += ".0"
    return s


def _tag(side: str) -> str:
    return "m" if side == "-" else "p"


@dataclass(frozen=True)
class EmittedKernel:
    name: str
    source: str
    measure: str
    facets: tuple
    mode: str
    shape: tuple
    flops: int
    interface: dict = field(default_factory=dict)

    @property
    def filename(self) -> str:
        return f"{self.name}.kernel.py"

    def load(self):
        """Execute the source and return its ``tabulate_tensor``."""
        namespace = {}
        exec(compile(self.source, self.filename, "exec"), namespace)
        return namespace["tabulate_tensor"]


class _Writer:
    def __init__(self):
        self.lines = []
        self.depth = 0

    def __call__(self, text=""):
        self.lines.append(("    " * self.depth + text) if text else "")

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _sides(measure):
    return ("+", "-") if measure == "dS" else ("",)


def _geometry_preamble(w: _Writer, measure, key):
    """Affine map, inverse, facet data and mesh size for each side."""
    flops = 0
    for j, side in enumerate(_sides(measure)):
        t = _tag(side)
        o = 6 * j
        w(f"x0_{t}, y0_{t}, x1_{t}, y1_{t}, x2_{t}, y2_{t} = coordinates[{o}:{o + 6}]")
        w(f"J00_{t} = x1_{t} - x0_{t}")
        w(f"J01_{t} = x2_{t} - x0_{t}")
        w(f"J10_{t} = y1_{t} - y0_{t}")
        w(f"J11_{t} = y2_{t} - y0_{t}")
        w(f"det_{t} = J00_{t} * J11_{t} - J01_{t} * J10_{t}")
        w(f"K00_{t} = J11_{t} / det_{t}")
        w(f"K01_{t} = -J01_{t} / det_{t}")
        w(f"K10_{t} = -J10_{t} / det_{t}")
        w(f"K11_{t} = J00_{t} / det_{t}")
        for f, (a, b) in enumerate(REFERENCE_TRIANGLE.facets):
            w(f"L{f}_{t} = math.hypot(x{b}_{t} - x{a}_{t}, y{b}_{t} - y{a}_{t})")
        w(f"h_{t} = L0_{t} * L1_{t} * L2_{t} / abs(det_{t})")
        flops += 4 + 1 + 4 + 3 * 5 + 3
        if measure != "dx":
            f = key[j]
            g = REFERENCE_BARYCENTRIC_GRADIENTS[f]
            for b in range(2):
                parts = [f"{_lit(-g[a])} * K{a}{b}_{t}" for a in range(2) if g[a] != 0]
                w(f"n{b}_{t} = " + (" + ".join(parts) if parts else "0.0"))
            w(f"nn_{t} = math.hypot(n0_{t}, n1_{t})")
            w(f"n0_{t} = n0_{t} / nn_{t}")
            w(f"n1_{t} = n1_{t} / nn_{t}")
            flops += 4 + 3 + 2
    if measure == "dS":
        w("h = 0.5 * (h_p + h_m)")
        flops += 2
    else:
        w("h = h_p")
    w("scale = abs(det_p)" if measure == "dx" else f"scale = L{key[0]}_p")
    return flops


def _factor_expr(f) -> str:
    kind = f[0]
    if kind == "K":
        return f"K{f[2]}{f[3]}_{_tag(f[1])}"
    if kind == "n":
        return f"n{f[2]}_{_tag(f[1])}"
    if kind == "of":
        return "of_m" if f[1] == "-" else "of_p"
    if kind == "h":
        p = int(f[1])
        return f"h ** {p}" if p >= 0 else f"h ** ({p})"
    raise ValueError(f"unknown geometric factor {f!r}")


def _recipe_expr(terms):
    parts = []
    for c, factors in terms:
        parts.append(" * ".join([_lit(c)] + [_factor_expr(f) for f in factors]))
    return " + ".join(parts) if parts else "0.0"


def _recipe_flops(terms):
    return sum(len(fs) + 1 for _, fs in terms) + 1


def _chunked_sum(w: _Writer, target, products):
    """target = sum(products), at most MAX_TERMS terms per statement."""
    if not products:
        w(f"{target} = 0.0")
        return
    for start in range(0, len(products), MAX_TERMS):
        op = "=" if start == 0 else "+="
        w(f"{target} {op} " + " + ".join(products[start:start + MAX_TERMS]))


def _header(w, compiled, measure, key, mode, flops, shape):
    slot = "cell" if measure == "dx" else ("exterior facet" if measure == "ds" else "interior facet")
    w("import math")
    w("")
    w("")
    w("def tabulate_tensor(coordinates, coefficients, facets=(), indicators=(1.0, 0.0)):")
    w.depth = 1
    w(f"# form {compiled.name}, {slot} slot {tuple(key)}, {mode} mode, {flops} flops per tensor")
    w(f"# element tensor shape {tuple(shape)}, returned flat in row-major order")
    w(f"if tuple(facets) and tuple(facets) != {tuple(key)!r}:")
    w(f"    raise ValueError('kernel compiled for facet slot {tuple(key)}')")
    w("of_p = float(indicators[0])")
    if measure == "dS":
        w("of_m = float(indicators[1])")


def _coefficient_refs(w, compiled, names):
    for i, name in enumerate(names):
        w(f"w{i} = coefficients[{name!r}]")


def _coef_offset(coef_elements, name, side):
    return coef_elements[name].space_dim if side == "-" else 0


def _emit_tensor(compiled, measure, key):
    kernel = compiled.kernel(measure, key, "tensor")
    coef_elements = compiled.coefficient_elements
    names = sorted({name for _, r in kernel.terms for name, _, _ in r.coefficients})
    index = {n: i for i, n in enumerate(names)}
    body = _Writer()
    body.depth = 1
    geo = _geometry_preamble(body, measure, key)
    _coefficient_refs(body, compiled, names)
    flops = geo
    column = 0
    for t, (_, recipe) in enumerate(kernel.terms):
        body(f"g{t} = scale * ({_recipe_expr(recipe.terms)})")
        flops += _recipe_flops(recipe.terms)
        dims = recipe.secondary_shape
        count = 1
        for idx in np.ndindex(*dims):
            parts = [f"g{t}"]
            for (name, side, _), i in zip(recipe.coefficients, idx):
                parts.append(f"w{index[name]}[{_coef_offset(coef_elements, name, side) + i}]")
            body(f"G{column} = " + " * ".join(parts))
            column += 1
        size = 1
        for d in dims:
            size *= d
            count += size
        flops += count - 1
    stacked = kernel.stacked
    nI = stacked.shape[0]
    body(f"A = [0.0] * {nI}")
    for i in range(nI):
        nz = np.flatnonzero(stacked[i])
        if len(nz):
            _chunked_sum(body, f"A[{i}]", [f"{_lit(stacked[i, a])} * G{a}" for a in nz])
    body("return A")
    flops += contraction_flops(kernel)
    return kernel.shape, flops, body


def _group_monomials(compiled, measure):
    groups = {}
    for m in compiled.monomial_form.monomials.get(measure, ()):
        args = tuple(sorted(m.arguments, key=lambda f: f[1]))
        groups.setdefault(args + m.coefficient_factors, []).append((m.coeff, m.geometric_factors))
    return [(sig, groups[sig]) for sig in sorted(groups, key=repr)]


def _emit_quadrature(compiled, measure, key):
    qk = compiled.kernel(measure, key, "quadrature")
    rule, points = qk.rule, qk.points
    elements = compiled.elements
    coef_elements = compiled.coefficient_elements
    shape = tuple(qk.shape)
    rank = len(shape)
    groups = _group_monomials(compiled, measure)
    two = measure == "dS"
    tables = {}

    def table_name(f):
        el = elements[f[1]] if f[0] == "arg" else coef_elements[f[1]]
        tk = (f[0], f[1], f[2], f[3], f[4])
        if tk not in tables:
            values = tabulate(el, points[f[2]], sum(f[4])).derivative(f[4])[:, :, f[3]]
            if f[0] == "arg" and two:
                n = values.shape[1]
                full = np.zeros((values.shape[0], 2 * n))
                off = 0 if f[2] == "+" else n
                full[:, off:off + n] = values
                values = full
            tables[tk] = (f"T{len(tables)}", values, el)
        return tables[tk][0]

    names = sorted({f[1] for sig, _ in groups for f in sig if f[0] == "coef"})
    index = {n: i for i, n in enumerate(names)}
    body = _Writer()
    body.depth = 1
    flops = _geometry_preamble(body, measure, key)
    _coefficient_refs(body, compiled, names)
    for t, (_, terms) in enumerate(groups):
        body(f"g{t} = scale * ({_recipe_expr(terms)})")
        flops += _recipe_flops(terms)
    nI = int(np.prod(shape)) if shape else 1
    Q = len(rule)
    body(f"A = [0.0] * {nI}")
    body(f"for q in range({Q}):")
    body.depth += 1
    per_point = 1
    coef_vars = {}
    for sig, _ in groups:
        for f in sig:
            if f[0] != "coef" or f in coef_vars:
                continue
            tname = table_name(f)
            dim = coef_elements[f[1]].space_dim
            off = _coef_offset(coef_elements, f[1], f[2])
            var = f"c{len(coef_vars)}"
            coef_vars[f] = var
            body(f"{var} = 0.0")
            body(f"for j in range({dim}):")
            body(f"    {var} += w{index[f[1]]}[{off} + j] * {tname}[q][j]")
            per_point += 2 * dim
    body("wq = W[q]")
    for t, (sig, _) in enumerate(groups):
        parts = [f"wq * g{t}"] + [coef_vars[f] for f in sig if f[0] == "coef"]
        body(f"s{t} = " + " * ".join(parts))
        per_point += len(parts)
    loop_vars = "ijk"[:rank]
    for r in range(rank):
        body(f"for {loop_vars[r]} in range({shape[r]}):")
        body.depth += 1
    products = []
    for t, (sig, _) in enumerate(groups):
        args = [f for f in sig if f[0] == "arg"]
        factors = [f"s{t}"] + [f"{table_name(f)}[q][{loop_vars[f[1]]}]" for f in args]
        products.append(" * ".join(factors))
    flat = "0"
    if rank:
        flat = loop_vars[0]
        for r in range(1, rank):
            flat = f"({flat}) * {shape[r]} + {loop_vars[r]}" if r > 1 else f"{flat} * {shape[r]} + {loop_vars[r]}"
    if products:
        for start in range(0, len(products), MAX_TERMS):
            body(f"A[{flat}] += " + " + ".join(products[start:start + MAX_TERMS]))
    body.depth = 1
    body("return A")
    inner = sum(rank + 1 for _ in groups) + len(groups)
    flops += Q * (per_point + nI * inner)
    # literal tables go after the header, before the loops that read them
    data = _Writer()
    data.depth = 1
    data("W = (" + ", ".join(_lit(x) for x in rule.weights) + ",)")
    for tname, values, _ in sorted(tables.values(), key=lambda x: int(x[0][1:])):
        rows = ["(" + ", ".join(_lit(x) for x in row) + ",)" for row in values]
        data(f"{tname} = (")
        for row in rows:
            data(f"    {row},")
        data(")")
    body.lines = data.lines + body.lines
    return shape, flops, body


def kernel_name(form_name, measure, key, mode) -> str:
    parts = [form_name, measure] + [str(k) for k in key] + [mode]
    return "_".join(parts)


def emit_kernel(compiled, measure, key=(), mode="tensor") -> EmittedKernel:
    key = tuple(key)
    if mode == "tensor":
        shape, flops, body = _emit_tensor(compiled, measure, key)
    elif mode == "quadrature":
        shape, flops, body = _emit_quadrature(compiled, measure, key)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    w = _Writer()
    _header(w, compiled, measure, key, mode, flops, shape)
    w.lines.extend(body.lines)
    n_coords = 12 if measure == "dS" else 6
    interface = {
        "coordinates": n_coords,
        "coefficients": {name: (2 if measure == "dS" else 1) * el.space_dim
                         for name, el in sorted(compiled.coefficient_elements.items())},
        "facets": key,
        "output": int(np.prod(shape)) if shape else 1,
    }
    return EmittedKernel(kernel_name(compiled.name, measure, key, mode), w.text(), measure, key,
                         mode, tuple(shape), int(flops), interface)


def emit(compiled, mode="tensor") -> list:
    """One kernel per measure and facet slot present in the form."""
    out = []
    for measure in MEASURE_ORDER:
        if measure in compiled.measures:
            out.extend(emit_kernel(compiled, measure, key, mode) for key in kernel_keys(measure))
    return out


def write_kernels(kernels, directory) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in kernels:
        path = directory / k.filename
        path.write_text(k.source)
        paths.append(path)
    return paths
