"""Exception hierarchy shared by all modules."""


class FnnQkdError(Exception):
    """Base class for every error raised by the package."""


class NotPositive(FnnQkdError, ValueError):
    """Operator is not a valid density matrix (fails Hermiticity, trace or PSD checks)."""


class DimensionMismatch(FnnQkdError, ValueError):
    pass


class IdenticalFlagMismatch(FnnQkdError, ValueError):
    """The identical-state variant was requested for triples that differ."""


class InfeasibleProblem(FnnQkdError, RuntimeError):
    pass


class VerificationFailure(FnnQkdError, AssertionError):
    def __init__(self, name: str, analytic: float, numeric: float, tol: float):
        self.name = name
        self.analytic = analytic
        self.numeric = numeric
        self.tol = tol
        super().__init__(
            f"{name}: numeric {numeric:.6f} differs from analytic {analytic:.6f} "
            f"by {abs(numeric - analytic):.2e} > {tol:.1e}"
        )


class ConfigError(FnnQkdError, ValueError):
    pass


class InsufficientStatistics(FnnQkdError, RuntimeError):
    pass


class LengthMismatch(FnnQkdError, ValueError):
    pass
