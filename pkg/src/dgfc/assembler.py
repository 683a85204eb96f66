"""Global assembly over cells, exterior facets and interior facets."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compiler import CompiledForm
from .dofmap import DofMap, build_dofmap, macro_maps
from .errors import AssemblyError, DimensionMismatch, MissingKernel
from .formlang.exprs import uses_indicator
from .integration import IntegrationData
from .mesh import Mesh, geometry
from .quadrep import AnalyticFunction
from .refelem import REFERENCE_TRIANGLE, map_facet_points


class SparseMatrix:
    """Sparse matrix built from (row, col, value) triplets, compressed to CSR.

    Duplicate entries are summed at :meth:`finalize` in sorted (row, col,
    value) order, so the result does not depend on insertion order.
    """

    def __init__(self, nrows: int, ncols: int):
        self.shape = (int(nrows), int(ncols))
        self._rows, self._cols, self._vals = [], [], []
        self.indptr = self.indices = self.data = None

    def add(self, rows, cols, values):
        """Accumulate dense blocks: rows (B, m), cols (B, n), values (B, m, n)."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        if rows.ndim == 1:
            rows, cols, values = rows[None], cols[None], values[None]
        B, m = rows.shape
        n = cols.shape[1]
        if values.shape != (B, m, n):
            raise DimensionMismatch(f"block values of shape {values.shape}, expected {(B, m, n)}")
        self._rows.append(np.broadcast_to(rows[:, :, None], (B, m, n)).ravel())
        self._cols.append(np.broadcast_to(cols[:, None, :], (B, m, n)).ravel())
        self._vals.append(values.ravel())
        self.indptr = None

    def add_entries(self, rows, cols, values):
        self._rows.append(np.asarray(rows, dtype=np.int64).ravel())
        self._cols.append(np.asarray(cols, dtype=np.int64).ravel())
        self._vals.append(np.asarray(values, dtype=float).ravel())
        self.indptr = None

    @property
    def num_triplets(self) -> int:
        return int(sum(len(v) for v in self._vals))

    def triplets(self):
        if not self._vals:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty, np.zeros(0)
        return np.concatenate(self._rows), np.concatenate(self._cols), np.concatenate(self._vals)

    def finalize(self) -> "SparseMatrix":
        r, c, v = self.triplets()
        if len(r) and (r.min() < 0 or r.max() >= self.shape[0] or c.min() < 0 or c.max() >= self.shape[1]):
            raise DimensionMismatch("triplet index outside the matrix")
        order = np.lexsort((v, c, r))
        r, c, v = r[order], c[order], v[order]
        if len(r):
            start = np.flatnonzero(np.r_[True, (r[1:] != r[:-1]) | (c[1:] != c[:-1])])
            vals = np.add.reduceat(v, start)
            rows, cols = r[start], c[start]
        else:
            vals, rows, cols = v, r, c
        self.indices = cols
        self.data = vals
        self.indptr = np.zeros(self.shape[0] + 1, dtype=np.int64)
        np.add.at(self.indptr, rows + 1, 1)
        self.indptr = np.cumsum(self.indptr)
        return self

    def _ensure(self):
        if self.indptr is None:
            self.finalize()

    @property
    def nnz(self) -> int:
        self._ensure()
        return len(self.data)

    def row_indices(self) -> np.ndarray:
        self._ensure()
        return np.repeat(np.arange(self.shape[0]), np.diff(self.indptr))

    def to_dense(self) -> np.ndarray:
        self._ensure()
        out = np.zeros(self.shape)
        out[self.row_indices(), self.indices] = self.data
        return out

    def to_scipy(self):
        import scipy.sparse as sp
        self._ensure()
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def matvec(self, x) -> np.ndarray:
        self._ensure()
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.shape[0])
        np.add.at(out, self.row_indices(), self.data * x[self.indices])
        return out

    __matmul__ = matvec

    def diagonal(self) -> np.ndarray:
        self._ensure()
        rows = self.row_indices()
        out = np.zeros(min(self.shape))
        mask = rows == self.indices
        out[rows[mask]] = self.data[mask]
        return out

    def transpose(self) -> "SparseMatrix":
        self._ensure()
        t = SparseMatrix(self.shape[1], self.shape[0])
        t.add_entries(self.indices, self.row_indices(), self.data)
        return t.finalize()

    def max_abs(self) -> float:
        self._ensure()
        return float(np.abs(self.data).max()) if len(self.data) else 0.0

    def submatrix(self, rows, cols) -> "SparseMatrix":
        """Restriction to the given row and column index sets (renumbered in order)."""
        self._ensure()
        rmap = np.full(self.shape[0], -1)
        rmap[np.asarray(rows)] = np.arange(len(rows))
        cmap = np.full(self.shape[1], -1)
        cmap[np.asarray(cols)] = np.arange(len(cols))
        r, c = rmap[self.row_indices()], cmap[self.indices]
        keep = (r >= 0) & (c >= 0)
        out = SparseMatrix(len(rows), len(cols))
        out.add_entries(r[keep], c[keep], self.data[keep])
        return out.finalize()

    @classmethod
    def from_dense(cls, A) -> "SparseMatrix":
        A = np.asarray(A, dtype=float)
        r, c = np.nonzero(A)
        m = cls(*A.shape)
        m.add_entries(r, c, A[r, c])
        return m.finalize()


def write_matrix_market(matrix: SparseMatrix, path) -> None:
    matrix._ensure()
    rows = matrix.row_indices()
    lines = ["%%MatrixMarket matrix coordinate real general",
             f"{matrix.shape[0]} {matrix.shape[1]} {matrix.nnz}"]
    lines += [f"{r + 1} {c + 1} {v:.17g}" for r, c, v in zip(rows, matrix.indices, matrix.data)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_market(path) -> SparseMatrix:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("%")]
    nr, nc, _ = (int(x) for x in lines[0].split())
    m = SparseMatrix(nr, nc)
    if len(lines) > 1:
        data = np.array([ln.split() for ln in lines[1:]], dtype=float)
        m.add_entries(data[:, 0].astype(np.int64) - 1, data[:, 1].astype(np.int64) - 1, data[:, 2])
    return m.finalize()


def write_vector(vector, path) -> None:
    Path(path).write_text("".join(f"{v:.17g}\n" for v in np.asarray(vector, dtype=float)))


def read_vector(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=1)


# upwind facet indicator ---------------------------------------------------------

def facet_indicator(b, n_plus):
    """(of+, of-) from velocity and '+' normal: of+ = 1 iff b . n+ >= 0."""
    flux = np.sum(np.asarray(b, dtype=float) * np.asarray(n_plus, dtype=float), axis=-1)
    plus = (flux >= 0.0).astype(float)
    return plus, 1.0 - plus


def facet_midpoints(mesh: Mesh, cells, facets) -> np.ndarray:
    a = np.array([REFERENCE_TRIANGLE.facets[f][0] for f in facets], dtype=np.int64).reshape(-1)
    b = np.array([REFERENCE_TRIANGLE.facets[f][1] for f in facets], dtype=np.int64).reshape(-1)
    cells = np.asarray(cells, dtype=np.int64)
    v = mesh.vertices[mesh.cells[cells]]
    idx = np.arange(len(cells))
    return 0.5 * (v[idx, a] + v[idx, b])


def evaluate_velocity(velocity, mesh: Mesh, cells, facets, dofmap: DofMap | None = None):
    """Velocity at the midpoints of local facets ``facets`` of ``cells``, shape (F, 2)."""
    cells = np.asarray(cells, dtype=np.int64)
    if isinstance(velocity, np.ndarray) and velocity.ndim == 1 and dofmap is not None:
        out = np.zeros((len(cells), 2))
        el = dofmap.element
        for f in range(3):
            sel = np.asarray(facets) == f
            if not sel.any():
                continue
            tab = el.tabulate(map_facet_points(f, np.array([0.5])))
            w = velocity[dofmap.cell_dofs[cells[sel]]]
            out[sel] = np.einsum("nc,bn->bc", tab.values[0], w)[:, :2]
        return out
    if callable(velocity):
        return np.asarray(velocity(facet_midpoints(mesh, cells, facets)), dtype=float).reshape(-1, 2)
    return np.broadcast_to(np.asarray(velocity, dtype=float), (len(cells), 2))


def compute_facet_indicator(velocity, mesh: Mesh, dofmap: DofMap | None = None):
    """(of+, of-) arrays over the mesh's interior facets, b sampled at facet midpoints."""
    fac = mesh.interior_facets
    if len(fac) == 0:
        return np.zeros(0), np.zeros(0)
    b = evaluate_velocity(velocity, mesh, fac[:, 0], fac[:, 1], dofmap)
    gp = geometry(mesh, fac[:, 0])
    n_plus = gp.normals[np.arange(len(fac)), fac[:, 1]]
    return facet_indicator(b, n_plus)


def compute_boundary_indicator(velocity, mesh: Mesh, dofmap: DofMap | None = None):
    """Outflow indicator on exterior facets: 1 where b . n >= 0."""
    fac = mesh.exterior_facets
    if len(fac) == 0:
        return np.zeros(0)
    b = evaluate_velocity(velocity, mesh, fac[:, 0], fac[:, 1], dofmap)
    g = geometry(mesh, fac[:, 0])
    n = g.normals[np.arange(len(fac)), fac[:, 1]]
    return facet_indicator(b, n)[0]


# assembly ------------------------------------------------------------------------

@dataclass
class AssemblyContext:
    compiled: CompiledForm
    mesh: Mesh
    dofmaps: tuple = None  # one per argument slot
    coefficients: dict = field(default_factory=dict)  # name -> global dofs or analytic
    coefficient_dofmaps: dict = field(default_factory=dict)
    mode: str = "tensor"
    velocity: object = None  # name of a coefficient, callable or constant vector
    chunk: int = 512

    def __post_init__(self):
        form = self.compiled
        if self.dofmaps is None:
            cache = {}
            self.dofmaps = tuple(cache.setdefault(e, build_dofmap(e, self.mesh)) for e in form.elements)
        self.dofmaps = tuple(self.dofmaps)
        if len(self.dofmaps) != form.rank:
            raise DimensionMismatch(f"form of rank {form.rank} given {len(self.dofmaps)} dofmaps")
        for slot, (dm, el) in enumerate(zip(self.dofmaps, form.elements)):
            if dm.cell_dofs.shape != (self.mesh.num_cells, el.space_dim):
                raise DimensionMismatch(f"dofmap for argument {slot} does not match its element")
        for name, el in form.coefficient_elements.items():
            if name not in self.coefficients:
                raise AssemblyError(f"no value given for coefficient {name!r}")
            value = self.coefficients[name]
            if _is_analytic(value):
                continue
            if name not in self.coefficient_dofmaps:
                match = [dm for dm in self.dofmaps if dm.element == el]
                self.coefficient_dofmaps[name] = match[0] if match else build_dofmap(el, self.mesh)
            dm = self.coefficient_dofmaps[name]
            value = np.asarray(value, dtype=float)
            if value.shape != (dm.dim,):
                raise DimensionMismatch(f"coefficient {name!r} has {value.size} values, "
                                        f"its space has dimension {dm.dim}")
            self.coefficients[name] = value


def _is_analytic(value) -> bool:
    return isinstance(value, AnalyticFunction) or callable(value)


def _needs_indicator(compiled, measure) -> bool:
    return any(uses_indicator(i.integrand) for i in compiled.form.integrals_for(measure))


def _indicator_velocity(ctx):
    if ctx.velocity is None:
        raise AssemblyError("form uses the facet indicator `of` but no velocity was given")
    if isinstance(ctx.velocity, str):
        return ctx.coefficients[ctx.velocity], ctx.coefficient_dofmaps.get(ctx.velocity)
    return ctx.velocity, None


def _local_coefficients(ctx, cells, side):
    out = {}
    for name in ctx.compiled.coefficient_elements:
        value = ctx.coefficients[name]
        if _is_analytic(value):
            out[name] = value
        else:
            out[(name, side)] = value[ctx.coefficient_dofmaps[name].cell_dofs[cells]]
    return out


class _Accumulator:
    def __init__(self, ctx):
        self.rank = ctx.compiled.rank
        dims = [dm.dim for dm in ctx.dofmaps]
        if self.rank == 0:
            self.value = 0.0
        elif self.rank == 1:
            self.value = np.zeros(dims[0])
        else:
            self.value = SparseMatrix(*dims)

    def add(self, maps, A):
        if self.rank == 0:
            self.value += float(np.sum(A))
        elif self.rank == 1:
            np.add.at(self.value, maps[0], A)
        else:
            self.value.add(maps[0], maps[1], A)

    def result(self):
        if self.rank == 2:
            return self.value.finalize()
        return self.value


def _chunks(n, size):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def assemble(ctx: AssemblyContext):
    """Assemble the form: a float (rank 0), vector (rank 1) or SparseMatrix (rank 2)."""
    compiled, mesh = ctx.compiled, ctx.mesh
    acc = _Accumulator(ctx)
    flops = 0
    for measure in compiled.measures:
        kernels = compiled.kernels(measure, ctx.mode)
        if measure == "dx":
            kernel = kernels[()]
            cells = np.arange(mesh.num_cells)
            for sl in _chunks(len(cells), ctx.chunk):
                c = cells[sl]
                data = IntegrationData("dx", geometry(mesh, c))
                A, fl = kernel.evaluate(data, _local_coefficients(ctx, c, ""))
                flops += fl * len(c)
                acc.add([dm.cell_dofs[c] for dm in ctx.dofmaps], A)
        elif measure == "ds":
            fac = mesh.exterior_facets
            ind = None
            if _needs_indicator(compiled, "ds"):
                vel, vdm = _indicator_velocity(ctx)
                ind = compute_boundary_indicator(vel, mesh, vdm)
            for f in range(3):
                if (f,) not in kernels:
                    raise MissingKernel(f"no ds kernel for facet {f}")
                sel = np.flatnonzero(fac[:, 1] == f)
                for sl in _chunks(len(sel), ctx.chunk):
                    idx = sel[sl]
                    c = fac[idx, 0]
                    indicators = {} if ind is None else {"+": ind[idx]}
                    data = IntegrationData("ds", geometry(mesh, c), facet_plus=f, indicators=indicators)
                    A, fl = kernels[(f,)].evaluate(data, _local_coefficients(ctx, c, ""))
                    flops += fl * len(c)
                    acc.add([dm.cell_dofs[c] for dm in ctx.dofmaps], A)
        else:
            fac = mesh.interior_facets
            ind = None
            if _needs_indicator(compiled, "dS"):
                vel, vdm = _indicator_velocity(ctx)
                ind = compute_facet_indicator(vel, mesh, vdm)
            for fp in range(3):
                for fm in range(3):
                    if (fp, fm) not in kernels:
                        raise MissingKernel(f"no dS kernel for facet pair {(fp, fm)}")
                    sel = np.flatnonzero((fac[:, 1] == fp) & (fac[:, 3] == fm))
                    for sl in _chunks(len(sel), ctx.chunk):
                        idx = sel[sl]
                        cp, cm = fac[idx, 0], fac[idx, 2]
                        indicators = {} if ind is None else {"+": ind[0][idx], "-": ind[1][idx]}
                        data = IntegrationData("dS", geometry(mesh, cp), geometry(mesh, cm), fp, fm,
                                               indicators)
                        coefs = _local_coefficients(ctx, cp, "+")
                        coefs.update(_local_coefficients(ctx, cm, "-"))
                        A, fl = kernels[(fp, fm)].evaluate(data, coefs)
                        flops += fl * len(cp)
                        acc.add([macro_maps(dm, cp, cm) for dm in ctx.dofmaps], A)
    ctx.last_flops = flops
    return acc.result()


def assemble_form(compiled, mesh, coefficients=None, mode="tensor", dofmaps=None, velocity=None,
                  **kwargs):
    """Convenience wrapper building the context and assembling."""
    ctx = AssemblyContext(compiled, mesh, dofmaps, dict(coefficients or {}), mode=mode,
                          velocity=velocity, **kwargs)
    return assemble(ctx)
