"""Exception types shared across the package."""


class DemaskError(Exception):
    """Base class for all demask errors."""


class ValidationError(DemaskError):
    """An input violates a documented precondition or type invariant."""


class RankDeficientError(DemaskError):
    """Least-squares design matrix does not have full column rank."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "design matrix is rank deficient; offending columns: "
            + ", ".join(str(c) for c in self.columns)
        )


class InfeasibleStartError(DemaskError):
    """Every candidate in the first sweep had zero likelihood."""


class AuditCapError(DemaskError):
    """Exact audit state space exceeds the configured cap."""
