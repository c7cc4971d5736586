"""Two-state spatial model for daily maximum temperature and extreme heat
events (EHEs): threshold exceedances, fitting by MCMC, posterior-predictive
simulation and validation."""
from .core import (DURATION_BINS, EheEvent, Station, StationSeries, Threshold,
                   compute_threshold, derive_states, duration_histogram,
                   exceedance_cdf_complement, extract_events)
from .mcmc import PosteriorChain, SamplerConfig, fit
from .model import SINGLE_STATE, TWO_STATE, ModelConfig, ModelData, ParameterState

__version__ = "0.1.0"

__all__ = [
    "DURATION_BINS", "EheEvent", "Station", "StationSeries", "Threshold",
    "compute_threshold", "derive_states", "duration_histogram",
    "exceedance_cdf_complement", "extract_events", "PosteriorChain",
    "SamplerConfig", "fit", "SINGLE_STATE", "TWO_STATE", "ModelConfig",
    "ModelData", "ParameterState",
]
