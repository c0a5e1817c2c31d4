"""Exception types shared across the package."""


class OracleFailure(RuntimeError):
    """Conjugate subproblem solver did not reach the requested tolerance.

    Carries the last gradient-map residual so callers can decide whether
    the partial answer is usable.
    """

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class InfeasibleWindow(ValueError):
    """A sequence generator cannot satisfy the requested connectivity window."""


class InvalidConfig(ValueError):
    """Incompatible algorithm / weight / step-size configuration."""


class CertificationUnavailable(RuntimeError):
    """A certification constant is undefined for the given inputs
    (e.g. a disconnected window union graph)."""
