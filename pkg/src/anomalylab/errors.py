"""Exception types shared across the engine."""


class AnomalyLabError(Exception):
    """Base class for all engine errors."""


class MixedParity(AnomalyLabError):
    """Bosonic and fermionic terms were summed into one expression."""


class GrassmannExponent(AnomalyLabError):
    """A fermionic or differentiated field appeared inside an exponential factor."""


class ParityMismatch(AnomalyLabError):
    """A substitution rule changes the Grassmann parity of a jet variable."""


class CyclicRule(AnomalyLabError):
    """Substitution rules do not eliminate time derivatives in finitely many steps."""


class UnknownField(AnomalyLabError):
    """An operation referenced a field symbol the expression or model does not know."""


class UnknownSymbol(AnomalyLabError):
    """A transformation rule references a symbol outside the model."""


class MissingKernelEntry(AnomalyLabError):
    """A bracket needs a kernel entry that the table does not provide."""


class NonConstantCentralCandidate(AnomalyLabError):
    """The delta''' coefficient of a bracket depends on the fields."""


class ClosureFailure(AnomalyLabError):
    """The functional part of a charge bracket is not in the declared span."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnknownModel(AnomalyLabError):
    """Requested builtin model does not exist."""


class ModelSyntaxError(AnomalyLabError):
    """Model definition text failed to parse."""

    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(AnomalyLabError):
    """A model violates a structural invariant."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class NonPolynomialDensity(AnomalyLabError):
    """Mode-space operations require densities polynomial in the jets."""


class CutoffExceeded(AnomalyLabError):
    """A mode computation needs Fourier modes beyond the truncation."""
