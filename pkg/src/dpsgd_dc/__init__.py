"""Final-iterate Renyi privacy accounting for DPSGD with gradient and parameter clipping.

Modules:

* :mod:`~dpsgd_dc.accountant`: RDP bounds, baselines, DP conversion, noise calibration
* :mod:`~dpsgd_dc.optimizer`: the clipped, projected DPSGD iteration
* :mod:`~dpsgd_dc.problems`: synthetic quadratic and logistic objectives
* :mod:`~dpsgd_dc.utility`: utility rates and parameter recommendation
* :mod:`~dpsgd_dc.mia`: membership-inference estimate of epsilon
* :mod:`~dpsgd_dc.cli`: the ``dpsgd-dc`` command
"""

from .accountant import (
    FAMILIES,
    BaselineParams,
    MechanismConfig,
    RdpQuery,
    RdpResult,
    alpha_star,
    best_dp,
    calibrate_sigma,
    composition_bound,
    dc_bound,
    evaluate,
    feldman_bound,
    altschuler_bound,
    gc_bound,
    kong_bound,
    optimal_beta,
    rdp_to_dp,
    trivial_bound,
)
from .errors import CalibrationError, ConfigurationError, DPSGDError, ParameterError, PreconditionError
from .optimizer import TrainConfig, TrainTrace, clip, project, step, train

__version__ = "0.1.0"

__all__ = [
    "FAMILIES", "BaselineParams", "MechanismConfig", "RdpQuery", "RdpResult", "alpha_star", "best_dp",
    "calibrate_sigma", "composition_bound", "dc_bound", "evaluate", "feldman_bound", "altschuler_bound",
    "gc_bound", "kong_bound", "optimal_beta", "rdp_to_dp", "trivial_bound", "CalibrationError",
    "ConfigurationError", "DPSGDError", "ParameterError", "PreconditionError", "TrainConfig", "TrainTrace",
    "clip", "project", "step", "train",
]
