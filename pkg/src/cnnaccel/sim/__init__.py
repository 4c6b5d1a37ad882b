"""Functional, bank-accurate simulator of the accelerator datapath."""

from ..schedule import schedule_ring, decompose_channels
from ._jit import default_backend, HAVE_NUMBA
from .machine import SimMachine, SimCounters, SimCapacityError, TraceWriter, parse_trace
from .plan import RingPlan, ring_plan, steady_reads_per_pixel
from .run import (
    run_standard_conv, run_pointwise, run_depthwise, run_onfly_pool, run_layer, run_network,
)

__all__ = [
    "schedule_ring", "decompose_channels", "default_backend", "HAVE_NUMBA",
    "SimMachine", "SimCounters", "SimCapacityError", "TraceWriter", "parse_trace",
    "RingPlan", "ring_plan", "steady_reads_per_pixel",
    "run_standard_conv", "run_pointwise", "run_depthwise", "run_onfly_pool", "run_layer", "run_network",
]
