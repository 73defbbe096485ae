"""Exception hierarchy shared by the solvers, evaluators and simulator."""


class CollapseLabError(Exception):
    pass


class DomainError(CollapseLabError, ValueError):
    """An argument lies outside the domain of the operation."""


class SolverError(CollapseLabError, RuntimeError):
    """A fixed-point iteration failed to converge."""

    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class ThresholdError(CollapseLabError, ArithmeticError):
    """The configuration sits on the interpolation threshold psi = 1."""

    def __init__(self, message: str, psi: float | None = None):
        super().__init__(message if psi is None else f"{message} (psi={psi:.6g})")
        self.psi = psi


class DegenerateVarianceError(CollapseLabError, ArithmeticError):
    """df2(kappa)/n >= 1, the variance of the classical estimator is unbounded."""


class NumericError(CollapseLabError, ArithmeticError):
    """A linear solve failed, usually from too small a ridge for the conditioning."""

    def __init__(self, message: str, condition: float = float("nan")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class ConfigError(CollapseLabError, ValueError):
    """An experiment configuration failed validation; ``problems`` lists each field."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))
