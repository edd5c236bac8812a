"""Exception types shared across the solvers and the command line."""


class StabilityError(ValueError):
    """Preference parameters admit no finite terminal policy."""


class SolverError(RuntimeError):
    """A numerical solve failed (non-convergence, negativity, non-finite values)."""


class CalibrationBracketError(RuntimeError):
    """The volatility search interval does not bracket a minimum."""


class InsufficientSampleError(RuntimeError):
    """Too few surviving paths to estimate the requested statistic."""
