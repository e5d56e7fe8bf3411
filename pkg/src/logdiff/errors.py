"""Exception types shared across the package."""


class EmptyRegionError(ValueError):
    """A cylinder intersects the grid in zero nodes."""


class OutOfDomainError(ValueError):
    """A requested region or evaluation point lies outside the covered domain."""


class SingularPointError(ValueError):
    """Evaluation requested at a point where the closed-form solution is singular."""


class ExponentRangeError(ValueError):
    """An exponent combination leaves its admissible range (e.g. beta <= 0)."""


class NewtonDivergenceError(RuntimeError):
    """Newton iteration failed to converge.

    Carries the last residual norm and the step index (when raised from a
    time loop) so callers can report where the run broke down.
    """

    def __init__(self, message, last_residual=None, step_index=None):
        super().__init__(message)
        self.last_residual = last_residual
        self.step_index = step_index
