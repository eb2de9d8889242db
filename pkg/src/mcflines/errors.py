"""Exception types shared across the package.

Every error that a caller may want to branch on gets its own class; the CLI
maps them to exit codes (spec errors -> 2, degenerate geometry -> 3, numeric
failures -> 4).
"""


class McfError(Exception):
    """Base class for all package errors."""


# --- expression / jet errors -------------------------------------------------

class ExprSyntaxError(McfError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownIdentifier(McfError):
    def __init__(self, name):
        super().__init__(f"unknown identifier '{name}'")
        self.name = name


class DomainError(McfError):
    def __init__(self, function, value):
        super().__init__(f"{function} not defined at {value!r}")
        self.function = function
        self.value = value


class DivisionByZeroConstantTerm(McfError):
    pass


# --- mean-function errors ----------------------------------------------------

class OutsideElliptic(McfError):
    def __init__(self, H, K):
        super().__init__(f"(H, K) = ({H}, {K}) outside the admissible cone H > 0, 0 <= K <= H^2")
        self.H = H
        self.K = K


class NonPositivePrincipalCurvature(McfError):
    pass


class InconclusiveProbe(McfError):
    pass


# --- surface errors ----------------------------------------------------------

class DegenerateParametrization(McfError):
    pass


class UnsupportedKind(McfError):
    pass


class UmbilicOnCurve(McfError):
    pass


# --- direction field / tracing errors ----------------------------------------

class CoincidentDirections(McfError):
    pass


class SeedOutsideElliptic(McfError):
    pass


class SeedUmbilic(McfError):
    pass


class TotallyUmbilic(McfError):
    pass


# --- singularity errors ------------------------------------------------------

class NonIsolatedUmbilics(McfError):
    pass


class RotationNotFound(McfError):
    pass


class NonDarbouxian(McfError):
    pass


class SingularParabolicPoint(McfError):
    pass


class MeanNotRegularAtParabolic(McfError):
    pass


class ChartAlignmentFailed(McfError):
    pass


class DegenerateSingularity(McfError):
    pass


# --- cycle errors ------------------------------------------------------------

class NoCycleFound(McfError):
    pass


class NoReturn(McfError):
    def __init__(self, offset, reason=""):
        super().__init__(f"trace from offset {offset} did not return ({reason})")
        self.offset = offset


class UmbilicOnCycle(McfError):
    pass


class ChartConstructionFailed(McfError):
    pass


class Inconclusive(McfError):
    pass


# --- CLI ----------------------------------------------------------------------

class IncompleteEvidence(McfError):
    pass
