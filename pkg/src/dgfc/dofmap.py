"""Local-to-global degree-of-freedom maps for cells and macro cells."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotAdjacent, UnsupportedElement
from .mesh import Mesh, geometry
from .refelem import REFERENCE_TRIANGLE, LagrangeElement, MixedElement


@dataclass(frozen=True)
class DofMap:
    element: object
    dim: int
    cell_dofs: np.ndarray  # (num_cells, space_dim)

    def cell_map(self, cell: int) -> np.ndarray:
        return self.cell_dofs[cell]

    @property
    def local_dim(self) -> int:
        return self.cell_dofs.shape[1]


@dataclass(frozen=True)
class MacroDofMap:
    dofs: np.ndarray  # length 2n: iota(K+) followed by iota(K-)
    injective: bool


def _scalar_dofmap(element: LagrangeElement, mesh: Mesh):
    n = element.scalar_dim
    ncells = mesh.num_cells
    if not element.continuous:
        return ncells * n, np.arange(ncells * n, dtype=np.int64).reshape(ncells, n)
    k = element.degree
    edges = mesh.edges()
    edge_index = {e: i for i, e in enumerate(edges)}
    nv = mesh.num_vertices
    per_edge = k - 1
    per_cell = (k - 1) * (k - 2) // 2
    edge_base = nv
    cell_base = nv + len(edges) * per_edge
    dofs = np.empty((ncells, n), dtype=np.int64)
    for c, cell in enumerate(mesh.cells):
        for i, (dim, ent, pos) in enumerate(element.scalar_entities):
            if dim == 0:
                dofs[c, i] = cell[ent]
            elif dim == 1:
                a, b = REFERENCE_TRIANGLE.facets[ent]
                e = edge_index[(int(cell[a]), int(cell[b]))]
                dofs[c, i] = edge_base + e * per_edge + pos
            else:
                dofs[c, i] = cell_base + c * per_cell + pos
    return cell_base + ncells * per_cell, dofs


def build_dofmap(element, mesh: Mesh) -> DofMap:
    """DG: cell blocks; CG: vertices, then edge nodes, then cell interiors.

    Vector elements stack one block of scalar dofs per component; mixed
    elements concatenate their sub-maps in declaration order.
    """
    if isinstance(element, MixedElement):
        blocks, offset = [], 0
        for sub in element.elements:
            m = build_dofmap(sub, mesh)
            blocks.append(m.cell_dofs + offset)
            offset += m.dim
        return DofMap(element, offset, np.hstack(blocks))
    if not isinstance(element, LagrangeElement):
        raise UnsupportedElement(f"cannot build a dofmap for {element!r}")
    ns, scalar = _scalar_dofmap(element, mesh)
    blocks = [scalar + c * ns for c in range(element.value_size)]
    return DofMap(element, ns * element.value_size, np.hstack(blocks))


def macro_map(dofmap: DofMap, cell_plus: int, cell_minus: int, mesh: Mesh | None = None) -> MacroDofMap:
    """Concatenate the two cell maps; with ``mesh`` given, check adjacency first."""
    if mesh is not None:
        shared = set(mesh.cells[cell_plus].tolist()) & set(mesh.cells[cell_minus].tolist())
        if cell_plus == cell_minus or len(shared) != 2:
            raise NotAdjacent(f"cells {cell_plus} and {cell_minus} do not share a facet")
    a = dofmap.cell_dofs[cell_plus]
    b = dofmap.cell_dofs[cell_minus]
    return MacroDofMap(np.concatenate([a, b]), len(np.intersect1d(a, b)) == 0)


def macro_maps(dofmap: DofMap, cells_plus, cells_minus) -> np.ndarray:
    """Vectorised macro maps, shape (facets, 2n)."""
    return np.hstack([dofmap.cell_dofs[cells_plus], dofmap.cell_dofs[cells_minus]])


def interpolate(function, element, mesh: Mesh, dofmap: DofMap | None = None) -> np.ndarray:
    """Nodal interpolation of ``function(points) -> values``.

    ``points`` has shape (P, 2); the callable returns shape (P,) for scalar
    elements or (P, value_size) otherwise.
    """
    if dofmap is None:
        dofmap = build_dofmap(element, mesh)
    geom = geometry(mesh)
    ref_points = element.dof_points()
    comps = element.dof_components()
    x = geom.push_forward(ref_points).reshape(-1, 2)
    vals = np.asarray(function(x), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    vals = vals.reshape(mesh.num_cells, len(ref_points), -1)
    local = vals[:, np.arange(len(ref_points)), comps]
    out = np.zeros(dofmap.dim)
    out[dofmap.cell_dofs] = local
    return out


def facet_local_dofs(element, f: int) -> np.ndarray:
    """Local dofs of a continuous element whose node lies on facet ``f``."""
    out = []
    for sub, dof0, _ in element.sub_elements:
        a, b = REFERENCE_TRIANGLE.facets[f]
        on = [i for i, (dim, ent, _) in enumerate(sub.scalar_entities)
              if (dim == 0 and ent in (a, b)) or (dim == 1 and ent == f)]
        for c in range(sub.value_size):
            out.extend(dof0 + c * sub.scalar_dim + i for i in on)
    return np.array(sorted(out), dtype=np.int64)


def boundary_dofs(dofmap: DofMap, mesh: Mesh) -> np.ndarray:
    """Global dofs of continuous sub-elements located on the boundary."""
    element = dofmap.element
    out = set()
    for c, f in mesh.exterior_facets:
        local = facet_local_dofs(element, int(f))
        conts = np.zeros(element.space_dim, dtype=bool)
        for sub, dof0, _ in element.sub_elements:
            if sub.continuous:
                conts[dof0:dof0 + sub.space_dim] = True
        local = local[conts[local]]
        out.update(dofmap.cell_dofs[c, local].tolist())
    return np.array(sorted(out), dtype=np.int64)
