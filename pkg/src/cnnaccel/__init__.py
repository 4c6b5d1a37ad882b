"""Cost model, tiling search and functional simulator for a tiled CNN inference accelerator."""

from .network import LayerSpec, NetworkSpec, NetworkValidationError, builtin_network, load_network, output_dims
from .costmodel import (
    MB, HardwareConfig, TilingChoice, AccessBreakdown, PerfReport, EnergyParams,
    access_output_reuse, access_input_reuse, access_no_reuse, network_access,
    cycles_for_layer, utilization, performance, energy_efficiency,
)
from .dse import enumerate_tilings, select_optimal, plan_network, compare_strategies, DsePlan
from .qtensor import QTensor
from . import oracle

__version__ = "0.1.0"
