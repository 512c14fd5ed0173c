"""Time-varying, frequency-band network connectedness from TVP-VAR posteriors."""
from .connectedness import ConnectednessSet, PosteriorSummary, summarize_posterior
from .dgp import DgpConfig, simulate_dgp, true_connectedness, run_mc_study
from .pipeline import estimate_panel
from .spectral import BandPartition, FrequencyBand, daily_bands, low_high_bands
from .timeseries_io import RunConfig, TimeSeriesPanel, annualize_rv, load_panel, write_panel

__version__ = "0.1.0"

__all__ = [
    "BandPartition",
    "ConnectednessSet",
    "DgpConfig",
    "FrequencyBand",
    "PosteriorSummary",
    "RunConfig",
    "TimeSeriesPanel",
    "annualize_rv",
    "daily_bands",
    "estimate_panel",
    "load_panel",
    "low_high_bands",
    "run_mc_study",
    "simulate_dgp",
    "summarize_posterior",
    "true_connectedness",
    "write_panel",
]
