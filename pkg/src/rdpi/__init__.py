"""Predictor-based PI boundary control of a reaction-diffusion equation with input delay.

Pipeline: :func:`compute_basis` -> :func:`build_truncated_model` ->
:func:`build_certificate` -> :func:`simulate`.
"""

__version__ = "0.1.0"

from .control import Certificate, build_certificate, kalman_rank, place_poles, lyapunov_solve
from .model import TruncatedModel, build_truncated_model, select_n
from .predictor import HistoryBuffer, PredictorState, artstein_transform
from .sim import (
    Scenario,
    TraceLog,
    compute_equilibrium,
    design,
    disturbance_scenario,
    reference_scenario,
    simulate,
)
from .spectral import ReactionProfile, SpectralBasis, compute_basis, mode_coefficients, project

__all__ = [
    "Certificate",
    "HistoryBuffer",
    "PredictorState",
    "ReactionProfile",
    "Scenario",
    "SpectralBasis",
    "TraceLog",
    "TruncatedModel",
    "artstein_transform",
    "build_certificate",
    "build_truncated_model",
    "compute_basis",
    "compute_equilibrium",
    "design",
    "disturbance_scenario",
    "kalman_rank",
    "lyapunov_solve",
    "mode_coefficients",
    "place_poles",
    "project",
    "reference_scenario",
    "select_n",
    "simulate",
]
