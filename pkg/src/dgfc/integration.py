"""Per-batch geometric data seen by element-tensor kernels.

A batch is a set of cells (``dx``), exterior facets sharing one local facet
number (``ds``) or interior facets sharing one ``(f+, f-)`` pair (``dS``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import KernelError, MissingSide, SingularJacobian
from .mesh import CellGeometry, cell_geometry, mesh_size
from .refelem import cell_quadrature, facet_quadrature, map_facet_points


@dataclass(frozen=True)
class IntegrationData:
    measure: str
    plus: CellGeometry
    minus: CellGeometry | None = None
    facet_plus: int | None = None
    facet_minus: int | None = None
    indicators: dict = field(default_factory=dict)  # side -> (B,) array of 0/1

    def __post_init__(self):
        for g in (self.plus, self.minus):
            if g is not None and np.any(np.abs(g.det) <= 1e-14):
                raise SingularJacobian("cell with vanishing Jacobian determinant")

    def __len__(self):
        return len(self.plus)

    @property
    def key(self) -> tuple:
        if self.measure == "dx":
            return ()
        if self.measure == "ds":
            return (self.facet_plus,)
        return (self.facet_plus, self.facet_minus)

    def cell(self, side: str) -> CellGeometry:
        if side == "-":
            if self.minus is None:
                raise MissingSide("interior facet data without the '-' cell")
            return self.minus
        return self.plus

    def facet(self, side: str) -> int:
        return self.facet_minus if side == "-" else self.facet_plus

    def K(self, side: str) -> np.ndarray:
        """dX/dx per cell, shape (B, 2, 2)."""
        return self.cell(side).inverse

    def normal(self, side: str) -> np.ndarray:
        if self.measure == "dx":
            raise KernelError("facet normal requested in a cell integral")
        g = self.cell(side)
        return g.normals[:, self.facet(side)]

    def h(self) -> np.ndarray:
        if self.measure == "dS":
            return 0.5 * (mesh_size(self.cell("+")) + mesh_size(self.cell("-")))
        return mesh_size(self.plus)

    def scale(self) -> np.ndarray:
        """Physical measure per unit reference measure."""
        if self.measure == "dx":
            return np.abs(self.plus.det)
        return self.plus.facet_lengths[:, self.facet_plus]

    def indicator(self, side: str) -> np.ndarray:
        key = "+" if side in ("", "+") else "-"
        if key not in self.indicators:
            raise KernelError(f"facet indicator for side '{key}' not supplied")
        return np.asarray(self.indicators[key], dtype=float)

    def reference_points(self, side: str, rule) -> np.ndarray:
        """Reference-cell coordinates of the rule's points on ``side``."""
        if self.measure == "dx":
            return rule.points
        return map_facet_points(self.facet(side), rule.points)

    def physical_points(self, side: str, rule) -> np.ndarray:
        return self.cell(side).push_forward(self.reference_points(side, rule))


def quadrature_rule(measure: str, degree: int):
    return cell_quadrature(degree) if measure == "dx" else facet_quadrature(degree)


def facet_points(measure: str, key: tuple, rule) -> dict:
    """Reference points per side for a kernel slot."""
    if measure == "dx":
        return {"": rule.points}
    if measure == "ds":
        return {"": map_facet_points(key[0], rule.points)}
    return {"+": map_facet_points(key[0], rule.points), "-": map_facet_points(key[1], rule.points)}


def cell_data(coords, facet=None) -> IntegrationData:
    """Data for single cells (``facet`` None) or their exterior facet ``facet``."""
    g = cell_geometry(np.asarray(coords, dtype=float).reshape(-1, 3, 2))
    if facet is None:
        return IntegrationData("dx", g)
    return IntegrationData("ds", g, facet_plus=int(facet), indicators={"+": np.ones(len(g))})


def pair_data(coords_plus, coords_minus, f_plus, f_minus, indicators=None) -> IntegrationData:
    gp = cell_geometry(np.asarray(coords_plus, dtype=float).reshape(-1, 3, 2))
    gm = cell_geometry(np.asarray(coords_minus, dtype=float).reshape(-1, 3, 2))
    if indicators is None:
        indicators = {"+": np.ones(len(gp)), "-": np.zeros(len(gp))}
    return IntegrationData("dS", gp, gm, int(f_plus), int(f_minus), indicators)
