"""Simulation and stability checks for neutral stochastic functional differential
equations with infinite fading memory."""

__version__ = "0.1.0"

from .fading_memory import Path, Segment, cr_norm, segment_at  # noqa: E402
from .measures import FadingMeasure, integrate_segment, r_moment, required_depth  # noqa: E402
from .model import NeutralModel, constant_ledger, example5_model  # noqa: E402
from .integrator import SchemeConfig, simulate_ensemble, simulate_path  # noqa: E402

__all__ = ["Path", "Segment", "cr_norm", "segment_at", "FadingMeasure", "integrate_segment",
           "r_moment", "required_depth", "NeutralModel", "constant_ledger", "example5_model",
           "SchemeConfig", "simulate_ensemble", "simulate_path"]
