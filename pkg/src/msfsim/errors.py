"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
InitialInfeasibilityError -> 3, SimulationAbort -> 4.
"""


class ConfigError(ValueError):
    """Invalid scenario configuration (bad value, unknown key, bad schema)."""


class InitialInfeasibilityError(RuntimeError):
    """No safe backup trajectory exists from the initial fleet state."""


class SimulationAbort(RuntimeError):
    """A scenario run hit a non-recoverable runtime condition."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class InvalidProblemError(ValueError):
    """Optimization problem evaluates to non-finite values at the start point."""
