"""Exception and warning types shared across the library."""


class OligoschedError(Exception):
    """Base class for all library-specific failures."""


class InvalidParamsError(OligoschedError, ValueError):
    """Inputs violate a documented precondition."""


class NonStationaryError(OligoschedError):
    """The backlog recursion has no stationary distribution for these inputs."""


class NoSolutionError(OligoschedError):
    """No admissible coefficient solution exists (risk-sensitive system)."""


class NoStableRootError(OligoschedError):
    """The congestion cubic has no real root in (0,1) with a stable recursion."""


class InvalidMarginError(OligoschedError, ValueError):
    """The standardized tail margin is nonpositive; the bound is vacuous."""


class UnstableError(OligoschedError):
    """Closed-loop spectral radius is at or above one."""


class SingularRowError(OligoschedError):
    """A row of the best-response map has a vanishing denominator."""

    def __init__(self, agent_type: int, periods_left: int, denominator: float):
        self.agent_type = agent_type
        self.periods_left = periods_left
        self.denominator = denominator
        super().__init__(
            f"singular best-response denominator {denominator:.3e} for agent "
            f"(type={agent_type}, periods_left={periods_left})"
        )


class NotConvergedError(OligoschedError):
    """Fixed-point iteration exhausted its budget; carries the residual trace."""

    def __init__(self, message: str, residuals=None):
        self.residuals = list(residuals) if residuals is not None else []
        if self.residuals:
            tail = ", ".join(f"{r:.3e}" for r in self.residuals[-5:])
            message = f"{message} (last residuals: {tail})"
        super().__init__(message)


class FixedPointUnstableError(UnstableError):
    """A fixed point was found but its closed loop is not stable."""

    def __init__(self, message: str, solution=None):
        self.solution = solution
        super().__init__(message)


class InsufficientSamplesError(OligoschedError):
    """A conditioning cell holds too few samples for a tail estimate."""


class NoStableInitError(OligoschedError):
    """No stabilizing initial gain could be constructed."""


class MultipleStableRootsWarning(UserWarning):
    """More than one cubic root qualified; the smallest was selected."""
