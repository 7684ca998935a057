"""anomalylab: symbolic detection of classical anomalies in 1+1D field theories.

The engine verifies symmetries of an action, checks that declared Noether
charges generate them under equal-time graded Poisson brackets, computes the
charge algebra, and extracts central extensions exactly.
"""

__version__ = "0.1.0"

from .jetexpr import (
    BOSON,
    FERMION,
    PI,
    FieldSymbol,
    JetExpr,
    Parameter,
    SmearSymbol,
    normal_form,
)
from .errors import (
    AnomalyLabError,
    ClosureFailure,
    CutoffExceeded,
    CyclicRule,
    GrassmannExponent,
    MissingKernelEntry,
    MixedParity,
    ModelSyntaxError,
    NonConstantCentralCandidate,
    NonPolynomialDensity,
    ParityMismatch,
    UnknownField,
    UnknownModel,
    UnknownSymbol,
    ValidationError,
)

__all__ = [
    "BOSON",
    "FERMION",
    "PI",
    "FieldSymbol",
    "JetExpr",
    "Parameter",
    "SmearSymbol",
    "normal_form",
    "AnomalyLabError",
    "ClosureFailure",
    "CutoffExceeded",
    "CyclicRule",
    "GrassmannExponent",
    "MissingKernelEntry",
    "MixedParity",
    "ModelSyntaxError",
    "NonConstantCentralCandidate",
    "NonPolynomialDensity",
    "ParityMismatch",
    "UnknownField",
    "UnknownModel",
    "UnknownSymbol",
    "ValidationError",
]
