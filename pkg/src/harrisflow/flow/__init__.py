"""n-point motions of Harris flows and of the Arratia flow."""
from .metric import path_metric
from .model import SCHEMES, FlowConfig, PathEnsemble, Trajectory
from .simulate import (
    BLOCK_SIZE,
    CrossingRateError,
    SheetExitError,
    SheetGrid,
    SimulationError,
    simulate,
    simulate_arratia,
    simulate_harris_cholesky,
    simulate_harris_sheet,
)

__all__ = [
    "BLOCK_SIZE",
    "SCHEMES",
    "CrossingRateError",
    "FlowConfig",
    "PathEnsemble",
    "SheetExitError",
    "SheetGrid",
    "SimulationError",
    "Trajectory",
    "path_metric",
    "simulate",
    "simulate_arratia",
    "simulate_harris_cholesky",
    "simulate_harris_sheet",
]
