"""Cycle-level simulator of threshold-logic processing-in-memory DRAM.

Compares a threshold-logic design (CIDAN) against the charge-sharing
back-ends Ambit, ReDRAM and DRISA on bulk bitwise kernels and workloads.
"""
from .backends import BackendKind, PimDevice, RunStats, UnsupportedOperationError
from .config import SimConfig, load_config
from .dram import DramGeometry, EnergyParams, TimingParams, check_trace
from .isa import BbopInstruction, decode, run_instruction
from .threshold import Func, UnsupportedFunctionError, compile_schedule, eval_threshold

__version__ = "0.1.0"

__all__ = [
    "BackendKind", "BbopInstruction", "DramGeometry", "EnergyParams", "Func", "PimDevice",
    "RunStats", "SimConfig", "TimingParams", "UnsupportedFunctionError",
    "UnsupportedOperationError", "check_trace", "compile_schedule", "decode", "eval_threshold",
    "load_config", "run_instruction",
]
