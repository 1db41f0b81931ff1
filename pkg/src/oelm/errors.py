"""Exception types for failures with a domain meaning.

Plain ``ValueError`` is used for argument validation; the classes here mark
events a caller may want to handle specially (abort a run, fall back, report
a diagnostic).
"""


class OelmError(Exception):
    """Base class for all package-specific failures."""


class IntegrationError(OelmError):
    """Time integration produced a non-finite state or failed to converge."""

    def __init__(self, message, step=None, state_norm=None):
        super().__init__(message)
        self.step = step
        self.state_norm = state_norm


class CalibrationError(OelmError):
    """Structural calibration target is infeasible."""


class SamplerError(OelmError):
    """MCMC sampling could not be started or produced no usable chain."""


class ProjectionError(OelmError):
    """Ray projection onto an exceedance region found no crossing."""


class EstimationError(OelmError):
    """An estimator hit a degenerate condition (e.g. zero overlap)."""


class OptimizationError(OelmError):
    """Every search start failed or the objective is degenerate."""


class ConfigError(OelmError):
    """Experiment configuration is invalid; message names the field path."""
