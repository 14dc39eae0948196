"""supchan: superchannels and entropy-production bounds for open quantum
dynamics with initial system-environment correlations."""

from . import bounds, campaigns, channels, dilation, matkernel, states, superchannel
from .config import DEFAULT_TOLS, Tolerances

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TOLS",
    "Tolerances",
    "__version__",
    "bounds",
    "campaigns",
    "channels",
    "dilation",
    "matkernel",
    "states",
    "superchannel",
]
