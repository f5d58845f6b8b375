"""Simulation and numerical large deviations for discrete-time slow-fast systems."""
from .core import (
    AdditiveNoiseDriver,
    DriftSpec,
    ExpandingDriver,
    KernelDriver,
    PiecewisePath,
    RngStream,
    SystemSpec,
    make_builtin,
    validate_system,
)
from .errors import SlowFastError

__version__ = "0.1.0"
