"""Optimal and robust MIMO-OFDM sensing waveforms from the log-det of the Fisher information."""

from .channel import (
    ArrayGeometry,
    MultipathParams,
    OfdmNumerology,
    PathParams,
    ResourceElement,
    channel_derivatives,
    channel_vector,
    steering_derivative,
    steering_vector,
)
from .crlb import CrlbReport, crlb_matrix, per_parameter_rmse
from .fim import (
    ResourceGrid,
    SensingProblem,
    SingularFimError,
    fim_closed,
    fim_elementwise,
    objective,
    objective_gradient,
)
from .manifold import OptimizerConfig, PowerConstraints, repms
from .scenario import (
    ScenarioConfig,
    default_weight_matrix,
    generate_scenario,
    make_problem,
    noise_variance,
    scenario_rng,
)
from .stochastic import PerturbationSpec, StochasticConfig, srepms

__version__ = "0.1.0"
