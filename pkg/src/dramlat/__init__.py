"""DRAM latency simulator.

Three low-latency DRAM mechanisms on a shared substrate: tiered-latency
bitline segmentation (``tldram``, ``policies``), temperature-adaptive timings
(``aldram``) and variation-aware timings with ECC burst shuffling (``ava``),
evaluated against a synthetic per-cell variation model (``variation``) by a
simulated profiling harness (``harness``) and a trace-driven controller model
(``sim``).
"""

from .core import DDR3_1066, DDR3_1600, Address, TimingParams, Topology
from .errors import (ConfigError, DramlatError, IllegalCommand, ModuleRejected, TraceError,
                     TransferError)
from .presets import chip_preset
from .sim import SimConfig, SimResult, simulate
from .variation import ChipModel, VariationParams

__version__ = "0.1.0"

__all__ = [
    "DDR3_1066", "DDR3_1600", "Address", "TimingParams", "Topology",
    "ConfigError", "DramlatError", "IllegalCommand", "ModuleRejected", "TraceError", "TransferError",
    "chip_preset", "SimConfig", "SimResult", "simulate", "ChipModel", "VariationParams",
]
