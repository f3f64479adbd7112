"""Exception hierarchy."""


class UCError(Exception):
    """Base class for toolkit errors."""


class InvalidArgument(UCError, ValueError):
    pass


class UnsupportedCostCurve(UCError, ValueError):
    pass


class UnsupportedTreeSize(UCError, ValueError):
    pass


class DegenerateQuantileSpacing(UCError, ValueError):
    pass


class InfeasibleSchedule(UCError, ValueError):
    """Raised when a schedule breaks commitment constraints; carries the violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        head = ", ".join(str(v) for v in self.violations[:5])
        more = "" if len(self.violations) <= 5 else f" (+{len(self.violations) - 5} more)"
        super().__init__(f"infeasible schedule: {head}{more}")


class TrainingDiverged(UCError, RuntimeError):
    def __init__(self, message, snapshot=None):
        super().__init__(message)
        self.snapshot = snapshot


class ArchitectureMismatch(UCError, ValueError):
    pass


class ConfigError(UCError, ValueError):
    """Malformed or inconsistent experiment configuration."""
