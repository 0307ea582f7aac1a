"""Detection, classification and retrieval of unobservable false-data injection in PMU streams."""

__version__ = "0.1.0"

from .attack import AttackPlan, build_plan, inject  # noqa: E402
from .evaluation import MetricsReport, PipelineParams, noise_sweep, run_scenario  # noqa: E402
from .grid import GridModel, build_grid, generate_clean, residual_bdd  # noqa: E402
from .icon import Ensemble, calibrate_gamma, cross_correlation, similarity  # noqa: E402
from .kernels import BACKEND_NAME  # noqa: E402
from .origin import DegenerateFitError, calibrate, fit_circle  # noqa: E402
from .phasor import MeasurementMatrix, ScenarioConfig, load_preset, load_stream, save_stream  # noqa: E402
from .retrieval import retrieve_sample, retrieve_stream  # noqa: E402

__all__ = [
    "AttackPlan", "BACKEND_NAME", "DegenerateFitError", "Ensemble", "GridModel",
    "MeasurementMatrix", "MetricsReport", "PipelineParams", "ScenarioConfig",
    "build_grid", "build_plan", "calibrate", "calibrate_gamma", "cross_correlation",
    "fit_circle", "generate_clean", "inject", "load_preset", "load_stream",
    "noise_sweep", "residual_bdd", "retrieve_sample", "retrieve_stream",
    "run_scenario", "save_stream", "similarity",
]
