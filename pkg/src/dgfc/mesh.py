"""Triangle meshes with facet connectivity and affine cell geometry."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BadResolution, DegenerateCell, MeshError, NonManifold
from .refelem import REFERENCE_BARYCENTRIC_GRADIENTS, REFERENCE_TRIANGLE


@dataclass(frozen=True)
class Mesh:
    """Triangulation with ascending vertex order per cell.

    ``interior_facets`` rows are ``(cell+, f+, cell-, f-)`` with cell+ the
    smaller cell index; ``exterior_facets`` rows are ``(cell, f)``.  Facet
    ``f`` of a cell is the edge opposite its local vertex ``f``.
    """

    vertices: np.ndarray
    cells: np.ndarray
    interior_facets: np.ndarray = None
    exterior_facets: np.ndarray = None

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    def facet_vertices(self, cell: int, f: int) -> tuple:
        a, b = REFERENCE_TRIANGLE.facets[f]
        return int(self.cells[cell, a]), int(self.cells[cell, b])

    def swapped(self) -> "Mesh":
        """Same mesh with the +/- labels of every interior facet exchanged."""
        return replace(self, interior_facets=self.interior_facets[:, [2, 3, 0, 1]].copy())

    def edges(self) -> list:
        """Sorted unique edges as (v0, v1) with v0 < v1."""
        keys = set()
        for c in self.cells:
            for a, b in REFERENCE_TRIANGLE.facets:
                keys.add((int(c[a]), int(c[b])))
        return sorted(keys)


def make_mesh(vertices, cells) -> Mesh:
    vertices = np.asarray(vertices, dtype=float).reshape(-1, 2)
    cells = np.sort(np.asarray(cells, dtype=np.int64).reshape(-1, 3), axis=1)
    if len(cells) and (cells.min() < 0 or cells.max() >= len(vertices)):
        raise MeshError("cell refers to a vertex that does not exist")
    return build_connectivity(Mesh(vertices, cells))


def build_connectivity(mesh: Mesh) -> Mesh:
    incident = {}
    for c, cell in enumerate(mesh.cells):
        if len(set(cell.tolist())) != 3:
            raise MeshError(f"cell {c} repeats a vertex")
        for f, (a, b) in enumerate(REFERENCE_TRIANGLE.facets):
            incident.setdefault((int(cell[a]), int(cell[b])), []).append((c, f))
    interior, exterior = [], []
    for key in sorted(incident):
        owners = incident[key]
        if len(owners) == 1:
            exterior.append(owners[0])
        elif len(owners) == 2:
            (c0, f0), (c1, f1) = sorted(owners)
            interior.append((c0, f0, c1, f1))
        else:
            raise NonManifold(f"edge {key} is shared by {len(owners)} cells")
    interior = np.array(interior, dtype=np.int64).reshape(-1, 4)
    exterior = np.array(exterior, dtype=np.int64).reshape(-1, 2)
    return replace(mesh, interior_facets=interior, exterior_facets=exterior)


def unit_square(nx: int, ny: int | None = None) -> Mesh:
    """Structured mesh of [0,1]^2, each square split along its (0,0)-(1,1) diagonal."""
    ny = nx if ny is None else ny
    if nx < 1 or ny < 1:
        raise BadResolution(f"resolution must be >= 1, got ({nx}, {ny})")
    xs, ys = np.meshgrid(np.linspace(0, 1, nx + 1), np.linspace(0, 1, ny + 1), indexing="xy")
    vertices = np.column_stack([xs.ravel(), ys.ravel()])
    cells = []
    for j in range(ny):
        for i in range(nx):
            v00 = j * (nx + 1) + i
            v10, v01, v11 = v00 + 1, v00 + nx + 1, v00 + nx + 2
            cells.append((v00, v10, v11))
            cells.append((v00, v01, v11))
    return make_mesh(vertices, cells)


def read_mesh(path) -> Mesh:
    """Read the text format: ``V E`` then V lines ``x y`` then E lines ``i j k``."""
    tokens = Path(path).read_text().split()
    nv, ne = int(tokens[0]), int(tokens[1])
    vals = tokens[2:]
    if len(vals) < 2 * nv + 3 * ne:
        raise MeshError(f"{path}: truncated mesh file")
    vertices = np.array(vals[: 2 * nv], dtype=float).reshape(nv, 2)
    cells = np.array(vals[2 * nv: 2 * nv + 3 * ne], dtype=np.int64).reshape(ne, 3)
    return make_mesh(vertices, cells)


def write_mesh(mesh: Mesh, path) -> None:
    lines = [f"{mesh.num_vertices} {mesh.num_cells}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join(map(str, c)) for c in mesh.cells.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class CellGeometry:
    """Affine map data for a batch of cells (leading axis = cell).

    ``jacobian[c]`` has columns v1 - v0 and v2 - v0; ``inverse[c]`` holds
    dX/dx, so ``inverse[c][a, b] = dX_a / dx_b``.
    """

    origin: np.ndarray
    jacobian: np.ndarray
    inverse: np.ndarray
    det: np.ndarray
    circumradius: np.ndarray
    normals: np.ndarray
    facet_lengths: np.ndarray

    @property
    def inverse_transpose(self) -> np.ndarray:
        return np.swapaxes(self.inverse, -1, -2)

    @property
    def size(self) -> np.ndarray:
        return mesh_size(self)

    def __len__(self):
        return len(self.det)

    def take(self, idx) -> "CellGeometry":
        return CellGeometry(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))

    def push_forward(self, points) -> np.ndarray:
        """Physical coordinates of reference points, shape (cells, npoints, 2)."""
        points = np.asarray(points, dtype=float)
        return self.origin[:, None, :] + np.einsum("cij,pj->cpi", self.jacobian, points)


def cell_geometry(coords) -> CellGeometry:
    """Geometry for vertex coordinates of shape (cells, 3, 2)."""
    coords = np.asarray(coords, dtype=float)
    x0 = coords[:, 0]
    J = np.stack([coords[:, 1] - x0, coords[:, 2] - x0], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    bad = np.abs(det) <= 1e-14
    if bad.any():
        raise DegenerateCell(f"cell {int(np.argmax(bad))} has |det J| <= 1e-14")
    K = np.empty_like(J)
    K[:, 0, 0] = J[:, 1, 1] / det
    K[:, 1, 1] = J[:, 0, 0] / det
    K[:, 0, 1] = -J[:, 0, 1] / det
    K[:, 1, 0] = -J[:, 1, 0] / det
    lengths = np.stack([
        np.linalg.norm(coords[:, b] - coords[:, a], axis=-1)
        for a, b in REFERENCE_TRIANGLE.facets
    ], axis=-1)
    area = 0.5 * np.abs(det)
    circumradius = lengths.prod(axis=-1) / (4.0 * area)
    # outward normal of facet f is -grad(lambda_f) = -K^T grad_X(lambda_f)
    normals = -np.einsum("cab,fa->cfb", K, REFERENCE_BARYCENTRIC_GRADIENTS)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    return CellGeometry(x0, J, K, det, circumradius, normals, lengths)


def geometry(mesh: Mesh, cells=None) -> CellGeometry:
    if cells is None:
        cells = np.arange(mesh.num_cells)
    cells = np.atleast_1d(np.asarray(cells, dtype=np.int64))
    if len(cells) and (cells.min() < 0 or cells.max() >= mesh.num_cells):
        raise IndexError("cell index out of range")
    return cell_geometry(mesh.vertices[mesh.cells[cells]])


def mesh_size(geom: CellGeometry) -> np.ndarray:
    """Cell size h_K, twice the circumradius."""
    return 2.0 * geom.circumradius


def facet_mesh_size(geom_plus: CellGeometry, geom_minus: CellGeometry | None = None):
    """Average of the two cell sizes on an interior facet; h_K on the boundary."""
    if geom_minus is None:
        return mesh_size(geom_plus)
    return 0.5 * (mesh_size(geom_plus) + mesh_size(geom_minus))


def facet_normal(geom: CellGeometry, f) -> np.ndarray:
    """Unit outward normal(s) of local facet ``f`` (scalar or per-cell array)."""
    f = np.broadcast_to(np.asarray(f), geom.det.shape)
    return geom.normals[np.arange(len(geom)), f]


def total_area(mesh: Mesh) -> float:
    return float(np.sum(np.abs(geometry(mesh).det)) / 2.0)
