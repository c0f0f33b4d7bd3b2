"""freqforge: frequency-aware triple-branch forgery detection."""

from . import backbone, cfce, config, dfcs, freq, gfm, harness, miloss, network

__version__ = "0.1.0"

__all__ = [
    "backbone",
    "cfce",
    "config",
    "dfcs",
    "freq",
    "gfm",
    "harness",
    "miloss",
    "network",
    "__version__",
]
