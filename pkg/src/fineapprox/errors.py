"""Exception taxonomy shared by all modules."""


class FineApproxError(Exception):
    """Base class for all library errors."""


class ConfigurationError(FineApproxError):
    """Bad user-supplied parameters (unsupported kind, eps <= 0, ...)."""


class ContractViolation(FineApproxError):
    """A caller broke an operation precondition (dimension mismatch, empty input)."""


class InfeasibilityError(FineApproxError):
    """No parameter value satisfies the requested certificate within the search cap."""


class ConstructionError(FineApproxError):
    """A constructed object failed its own verification sweep."""


class DomainError(FineApproxError):
    """A query point lies outside the certified region."""


class IntegrityError(FineApproxError):
    """A runtime floor assertion failed during evaluation."""


class RangeError(FineApproxError):
    """A closed-form value overflowed or is not finite."""
