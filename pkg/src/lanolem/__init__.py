"""LaNoLem: latent non-linear equation modeling.

Estimates latent states and sparse polynomial dynamics from noisy multivariate
time series via extended Kalman smoothing, proximal-gradient sparse learning,
and MDL-driven model selection.
"""

from .datagen import NoiseSpec, PolynomialODE, SYSTEMS, add_noise, make_benchmark, mask_intervals, rk4
from .em import FitError, FitOptions, FitReport, fit, fit_restarts, initialize
from .evaluate import (CoefficientTable, coefficient_error, discrete_to_continuous,
                       filtered_end_state, interpolate, one_step_mse, one_step_predictions)
from .inference import ForwardPass, MomentSet, SmoothedTrajectory, compute_moments, ekf_forward, rts_backward
from .learning import SparseFitConfig, SummedMoments, fit_C, fit_covariances, fit_offsets, fit_sparse, penalized_objective, soft_threshold, sparse_gradient, step_size
from .linalg import NumericalError
from .mdl import MdlBreakdown, SelectionResult, data_cost, mdl_breakdown, model_cost, model_select
from .model import Hyperparams, ModelParams, observe, shift_target, simulate, step_mean, transition_jacobian
from .polybasis import MonomialExponent, PolyBasis, enumerate_basis, expected_phi, gaussian_moment, phi, phi_jacobian
from .stlsq import StlsqConfig, finite_diff_derivatives, stlsq_aic_fit, stlsq_fit

__version__ = "0.1.0"

__all__ = [
    "CoefficientTable", "FitError", "FitOptions", "FitReport", "ForwardPass",
    "Hyperparams", "MdlBreakdown", "ModelParams", "MomentSet", "MonomialExponent",
    "NoiseSpec", "NumericalError", "PolyBasis", "PolynomialODE", "SYSTEMS",
    "SelectionResult", "SmoothedTrajectory", "SparseFitConfig", "StlsqConfig",
    "SummedMoments", "add_noise", "coefficient_error", "compute_moments",
    "data_cost", "discrete_to_continuous", "ekf_forward", "enumerate_basis",
    "expected_phi", "filtered_end_state", "finite_diff_derivatives", "fit",
    "fit_C", "fit_covariances", "fit_offsets", "fit_restarts", "fit_sparse",
    "gaussian_moment", "initialize", "interpolate", "make_benchmark",
    "mask_intervals", "mdl_breakdown", "model_cost", "model_select", "observe",
    "one_step_mse", "one_step_predictions", "penalized_objective", "phi",
    "phi_jacobian", "rk4", "rts_backward", "shift_target", "simulate",
    "soft_threshold", "sparse_gradient", "step_mean", "step_size", "stlsq_aic_fit",
    "stlsq_fit", "transition_jacobian",
]
