"""Form compilation: source text or typed form to per-measure kernels in both modes."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import MissingKernel
from .formlang import check, expand, parse
from .quadrep import build_quad_kernels
from .tensorrep import (build_cell_kernel, build_exterior_facet_kernels,
                        build_interior_facet_kernels)

MODES = ("tensor", "quadrature")


@dataclass
class CompiledForm:
    form: object
    monomial_form: object
    quadrature_degree: int | None = None
    _tensor: dict = field(default_factory=dict, repr=False)
    _quad: dict = field(default_factory=dict, repr=False)

    @property
    def name(self) -> str:
        return self.form.name

    @property
    def rank(self) -> int:
        return self.form.rank

    @property
    def elements(self) -> tuple:
        return self.form.elements

    @property
    def coefficient_elements(self) -> dict:
        return dict(self.form.coefficients)

    @property
    def measures(self) -> tuple:
        return self.form.measures

    def kernels(self, measure: str, mode: str = "tensor") -> dict:
        """Kernels keyed by facet slot: () for dx, (f,) for ds, (f+, f-) for dS."""
        if measure not in self.measures:
            raise MissingKernel(f"form {self.name!r} has no {measure} integrals")
        if mode == "tensor":
            if measure not in self._tensor:
                if measure == "dx":
                    self._tensor[measure] = {(): build_cell_kernel(self.monomial_form)}
                elif measure == "ds":
                    self._tensor[measure] = build_exterior_facet_kernels(self.monomial_form)
                else:
                    self._tensor[measure] = build_interior_facet_kernels(self.monomial_form)
            return self._tensor[measure]
        if mode == "quadrature":
            if measure not in self._quad:
                self._quad[measure] = build_quad_kernels(self.form, measure, self.quadrature_degree)
            return self._quad[measure]
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")

    def kernel(self, measure: str, key: tuple = (), mode: str = "tensor"):
        table = self.kernels(measure, mode)
        if tuple(key) not in table:
            raise MissingKernel(f"no {measure} kernel for facet slot {key}")
        return table[tuple(key)]


def compile_form(form, quadrature_degree=None) -> CompiledForm:
    return CompiledForm(form, expand(form), quadrature_degree)


def compile_source(source: str, elements=None, constants=None, quadrature_degree=None) -> dict:
    """Compile every form in ``source``; returns name -> CompiledForm."""
    typed = check(parse(source), elements, constants)
    return {name: compile_form(f, quadrature_degree) for name, f in typed.forms.items()}


def compile_file(path, elements=None, constants=None, quadrature_degree=None) -> dict:
    return compile_source(Path(path).read_text(), elements, constants, quadrature_degree)
