"""Model-based derivative-free optimization of per-iteration transformed
(and differentially-private encrypted) black-box objectives."""

from .exceptions import (
    DegenerateEncryptionError,
    DegenerateGeometryError,
    DegenerateLagrangeError,
    DfopError,
    EvaluationError,
    GeometryRebuildNeeded,
    NearSingularUpdateError,
    ParameterError,
    ProtocolError,
    UnsupportedProblemError,
)
from .objective import ObjectiveSpec, TransformSchedule, TransformedObjective, plain_objective
from .privacy import LaplaceParams, MixParams, UniformParams
from .problems import ProblemInstance, get_problem, problem_library
from .solver import SolverConfig, SolverTrace, minimize

__all__ = [
    "DfopError", "ParameterError", "ProtocolError", "EvaluationError",
    "DegenerateEncryptionError", "DegenerateGeometryError",
    "DegenerateLagrangeError", "GeometryRebuildNeeded",
    "NearSingularUpdateError", "UnsupportedProblemError",
    "ObjectiveSpec", "TransformSchedule", "TransformedObjective",
    "plain_objective", "LaplaceParams", "UniformParams", "MixParams",
    "ProblemInstance", "get_problem", "problem_library",
    "SolverConfig", "SolverTrace", "minimize",
]

__version__ = "0.1.0"
