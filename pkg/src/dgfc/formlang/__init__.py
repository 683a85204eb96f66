"""Form language: parsing, semantic checking and monomial expansion."""
from .check import Form, Integral, TypedFormFile, check
from .expand import Monomial, MonomialForm, expand, expand_integrand
from .parser import parse
from .syntax import format_file

__all__ = ["Form", "Integral", "TypedFormFile", "check", "Monomial", "MonomialForm", "expand",
           "expand_integrand", "parse", "format_file"]
