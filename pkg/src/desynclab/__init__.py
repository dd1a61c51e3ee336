"""Convergence models and simulation for DESYNC and PCO desynchronisation."""

__version__ = "0.1.0"

from .analytic import (
    CapExceededError,
    EstimateResult,
    estimate_desync_cycles,
    estimate_pco_cycles,
    sigma_desync,
    sigma_pco,
    target_sigma,
)
from .core import NoiseModel, Phase, ProtocolParams
from .simulator import GridSummary, SimConfig, TrialRecord, run_grid, run_trial

__all__ = [
    "CapExceededError",
    "EstimateResult",
    "GridSummary",
    "NoiseModel",
    "Phase",
    "ProtocolParams",
    "SimConfig",
    "TrialRecord",
    "estimate_desync_cycles",
    "estimate_pco_cycles",
    "run_grid",
    "run_trial",
    "sigma_desync",
    "sigma_pco",
    "target_sigma",
]
