"""Optimized equivalent linearization for nonlinear random vibration.

Fit a small parametric linear system to a nonlinear oscillator's scalar
response, then use it as a control variate or importance-sampling device to
estimate mean peak responses and first-passage probabilities with far fewer
nonlinear model evaluations than plain Monte Carlo.
"""

from .counting import LINEAR_CALLS, NONLINEAR_CALLS
from .excitation import GroundMotionPsd, Modulation, Record, SpectralBasis, discretize_psd
from .linear_system import (
    LinearMoments,
    LinearSurrogate,
    LinearSystemParams,
    SurrogateFactory,
    estimate_linear_moments,
    frequency_response,
    linear_response,
    unit_impulse_response,
)
from .nonlinear_models import (
    BoucWenOscillator,
    CallableResponse,
    CubicOscillator,
    NonlinearResponse,
    QoiSpec,
    ShearBuilding,
    calibrate_shear_building,
    integrate,
)
from .samplers import ChainSamples, conditional_sample, gibbs_sample, secant_project
from .estimators import (
    EstimateResult,
    TailBridge,
    control_variate_estimate,
    importance_sampling_estimate,
    mcs_estimate,
    rare_event_conditioning,
    rare_event_relaxed_is,
    smooth_indicator,
    tail_bridge,
)
from .optimizer import (
    OptimizationBudget,
    OptimizationResult,
    PilotDataset,
    draw_pilot,
    fit_scale_b,
    optimize_correlation,
    optimize_cross_entropy,
    optimize_is_variance,
    optimize_rare_event,
    theta0_default,
    truncate_modes,
)

__version__ = "0.1.0"
