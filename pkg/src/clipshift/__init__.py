"""Error-feedback gradient clipping for distributed optimization.

Simulation library and experiment CLI for smoothed clipping with
per-node shift tracking, its differentially private variant, and a
contractive-compression variant, together with executable forms of
the stepsize rules, descent certificates, and privacy-utility bounds
that govern them.
"""

from .data import (
    Dataset,
    NodeShard,
    heterogeneous_split,
    parse_libsvm,
    standard_scale,
    write_libsvm,
)
from .errors import (
    ConfigurationError,
    DataFormatError,
    DivergenceError,
    InfeasibleStepsizeError,
)
from .ops import Compressor, clip, clip_residual_norm, compress, node_mean
from .optimizers import (
    METHODS,
    IterationRecord,
    MethodConfig,
    OptimizerState,
    StepStats,
    clip21_avg_run,
    run,
)
from .problems import KINDS, REGULARIZERS, Problem, SmoothnessInfo
from .rng import NoiseStream, gaussian_block, gaussian_sample
from .theory import (
    LyapunovParams,
    SigmaFloor,
    StepsizeInputs,
    dp_utility_bound,
    estimate_f_inf,
    eta_of,
    k_star,
    lyapunov,
    press_contraction_margin,
    rate_envelope,
    sigma_min,
    stepsize_dp,
    stepsize_multi,
    stepsize_press,
    stepsize_single,
)

__version__ = "0.1.0"

__all__ = [
    "Compressor",
    "ConfigurationError",
    "DataFormatError",
    "Dataset",
    "DivergenceError",
    "InfeasibleStepsizeError",
    "IterationRecord",
    "KINDS",
    "LyapunovParams",
    "METHODS",
    "MethodConfig",
    "NodeShard",
    "NoiseStream",
    "OptimizerState",
    "Problem",
    "REGULARIZERS",
    "SigmaFloor",
    "SmoothnessInfo",
    "StepStats",
    "StepsizeInputs",
    "clip",
    "clip21_avg_run",
    "clip_residual_norm",
    "compress",
    "dp_utility_bound",
    "estimate_f_inf",
    "eta_of",
    "gaussian_block",
    "gaussian_sample",
    "heterogeneous_split",
    "k_star",
    "lyapunov",
    "node_mean",
    "parse_libsvm",
    "press_contraction_margin",
    "rate_envelope",
    "run",
    "sigma_min",
    "standard_scale",
    "stepsize_dp",
    "stepsize_multi",
    "stepsize_press",
    "stepsize_single",
    "write_libsvm",
]
