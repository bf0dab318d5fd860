"""Cycle-level model of a streaming convolution accelerator, with golden references,
a host-side layer mapper and an analytic performance/bandwidth/power model."""
from .qformat import Q12_9, SATURATE, WRAP, QFormat, QWord, WideWord, dequantize, quantize, truncate
from .golden import (
    FeatureMap,
    FilterSet,
    LayerSpec,
    Network,
    classify_pixelwise,
    conv_fixed_chain,
    conv_real,
    maxpool2,
    quantization_error,
    relu,
    run_network,
)
from .datapath import BusTrace, ChipParams, OrigamiChip, TileResult, dual_clock_check, load_filters, simulate_tile
from .mapper import LayerPlan, TileJob, accumulate_offchip, plan_layer, pool_and_activate, prepare_kernel, run_layer
from .perf import (
    PerfReport,
    SystemConfig,
    efficiency_with_io,
    io_bandwidth,
    io_power,
    network_report,
    op_count,
    peak_throughput,
    scale_power,
    system_bandwidth,
)
from .reference import reference_layers

__version__ = "0.1.0"
