"""Exception types shared across the package."""


class ObserverPiError(Exception):
    """Base class for all package-specific errors."""


class ObservabilityError(ObserverPiError):
    """The measurement map does not determine the state (rank-deficient
    observability matrix)."""

    def __init__(self, rank: int, n_x: int):
        self.rank = rank
        self.n_x = n_x
        super().__init__(
            f"observability matrix has numeric rank {rank}, expected full "
            f"column rank {n_x}"
        )


class RiccatiConvergenceError(ObserverPiError):
    """Fixed-point iteration on the value-matrix equation did not reach the
    requested tolerance."""

    def __init__(self, residual: float, max_iter: int):
        self.residual = residual
        self.max_iter = max_iter
        super().__init__(
            f"no convergence after {max_iter} iterations "
            f"(last residual {residual:.3e})"
        )


class SimulationDivergedError(ObserverPiError):
    """Plant or observer state became non-finite / unbounded."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"simulation diverged at step {step}")


class IdentifiabilityError(ObserverPiError):
    """Regression problem is underdetermined at beta=0."""


class TrainingConvergenceError(ObserverPiError):
    """Proximal-gradient training stalled before reaching tolerance."""

    def __init__(self, residual: float):
        self.residual = residual
        super().__init__(f"trainer did not converge (last residual {residual:.3e})")


class PolicyEvaluationError(ObserverPiError):
    """Inner fixed-point evaluation loop failed to converge."""

    def __init__(self, residuals):
        self.residuals = list(residuals)
        last = self.residuals[-1] if self.residuals else float("nan")
        super().__init__(
            f"policy evaluation did not converge in {len(self.residuals)} "
            f"iterations (last change {last:.3e})"
        )


class PolicyRolloutError(ObserverPiError):
    """A candidate policy produced a divergent data-collection run; the outer
    loop is halted rather than silently continued."""

    def __init__(self, outer_iteration: int, cause: Exception | None = None):
        self.outer_iteration = outer_iteration
        self.cause = cause
        super().__init__(
            f"data collection diverged under the policy of outer iteration "
            f"{outer_iteration}"
        )


class ConditioningError(ObserverPiError):
    """A matrix that must be inverted is numerically singular."""
