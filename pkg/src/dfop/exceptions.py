"""Exception types shared across the package."""


class DfopError(Exception):
    """Base class for all package errors."""


class ParameterError(DfopError, ValueError):
    """An argument is outside its documented domain."""


class ProtocolError(DfopError):
    """The iteration-indexed evaluation protocol was violated."""


class EvaluationError(DfopError):
    """An evaluator returned a non-finite value."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class DegenerateEncryptionError(DfopError):
    """Multiplicative encryption requested where f + h vanishes."""


class DegenerateGeometryError(DfopError):
    """The interpolation geometry makes the KKT system unusable."""


class NearSingularUpdateError(DfopError):
    """The rank-structured inverse update has denominator below the floor."""


class DegenerateLagrangeError(DfopError):
    """The Lagrange function is numerically flat on the trust region."""


class GeometryRebuildNeeded(DfopError):
    """No candidate step gives an acceptable update denominator."""


class UnsupportedProblemError(DfopError):
    """The requested diagnostic needs data the problem does not carry."""
