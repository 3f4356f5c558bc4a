"""Exception hierarchy shared by all modules."""


class ImcVerifyError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ImcVerifyError, ArithmeticError):
    """Expression evaluated outside its domain (zero divisor, bad power)."""


class BudgetError(ImcVerifyError):
    """A subdivision or bookkeeping cap was hit before the target accuracy."""


class MisalignedLabels(ImcVerifyError):
    """A grid cell straddles label regions with different proposition sets."""


class DegenerateVariance(ImcVerifyError):
    """Variance interval cannot be handled (reserved; point masses are supported)."""


class Infeasible(ImcVerifyError):
    """Some IMC row admits no probability vector between its bounds."""


class CombinatorialCap(ImcVerifyError):
    """Vertex enumeration would exceed the configured size limit."""


class NonConvergence(ImcVerifyError):
    """Value iteration hit its iteration cap."""


class AlphabetMismatch(ImcVerifyError):
    """A DFA has no (or more than one) transition for a label that occurs."""


class NoFeasibleEta(ImcVerifyError):
    """No grid size on the candidate ladder satisfies the completeness inequality."""


class ParseError(ImcVerifyError):
    """Malformed expression, property or configuration text."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class ValidationError(ImcVerifyError):
    """Configuration is well formed but semantically invalid."""

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class TruncationWarning(UserWarning):
    """An unbounded property was estimated on horizon-truncated traces."""
