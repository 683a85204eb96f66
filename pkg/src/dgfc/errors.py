"""Exception hierarchy shared across the compiler, assembler and solvers."""


class DGFCError(Exception):
    """Base class for all errors raised by dgfc."""


# reference element
class ElementError(DGFCError):
    pass


class ContinuousDegreeZero(ElementError):
    pass


class UnsupportedDegree(ElementError):
    pass


class BadFacetIndex(ElementError):
    pass


class SingularVandermonde(ElementError):
    pass


# form language
class FormError(DGFCError):
    pass


class FormSyntaxError(FormError):
    """Parse failure carrying a 1-based line/column and the expected tokens."""

    def __init__(self, message, line=None, column=None, expected=()):
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        where = f"{line}:{column}: " if line is not None else ""
        if self.expected:
            message = f"{message} (expected {', '.join(self.expected)})"
        super().__init__(where + message)


class UnknownIdentifier(FormError):
    pass


class SemanticError(FormError):
    pass


class ShapeMismatch(SemanticError):
    pass


class RankError(SemanticError):
    pass


class RestrictionError(SemanticError):
    pass


class NonAffineDivision(SemanticError):
    pass


class UnsupportedExpression(SemanticError):
    pass


# kernels
class KernelError(DGFCError):
    pass


class DegreeOverflow(KernelError):
    pass


class MissingSide(KernelError):
    pass


class SingularJacobian(KernelError):
    pass


# mesh / dofs
class MeshError(DGFCError):
    pass


class BadResolution(MeshError):
    pass


class NonManifold(MeshError):
    pass


class DegenerateCell(MeshError):
    pass


class UnsupportedElement(DGFCError):
    pass


class NotAdjacent(DGFCError):
    pass


# assembly
class AssemblyError(DGFCError):
    pass


class MissingKernel(AssemblyError):
    pass


class DimensionMismatch(AssemblyError):
    pass


# linear solvers
class SolverError(DGFCError):
    pass


class SingularMatrix(SolverError):
    pass


class NotSymmetric(SolverError):
    pass


class NoConvergence(SolverError):
    pass
