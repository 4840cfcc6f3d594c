"""Fault-aware weight-memory simulation for quantized spiking networks."""

from .fam_codec import (
    MappingPattern,
    Rotation,
    WordFaultMask,
    decode_word,
    derive_fam1_patterns,
    derive_fam2_pattern,
    encode_word,
    longest_circular_run,
    select_rotation,
    word_fault_budget_ok,
)
from .memory_model import (
    DramGeometry,
    FaultKind,
    FaultMap,
    FaultSpec,
    SramGeometry,
    VoltageFaultTable,
    generate_fault_map,
    rate_at_voltage,
    yield_of,
)
from .memory_sim import (
    AccessLedger,
    PlacementConfig,
    build_hierarchy_mapping,
    place_in_dram,
    place_in_sram,
    read_back,
    simulate_hierarchy,
    tile_residency,
)
from .snn_engine import (
    EncodingParams,
    LifParams,
    QuantizedWeightStore,
    SnnModel,
    SpikeTrain,
    StdpParams,
    assign_labels,
    dequantize_weights,
    evaluate_accuracy,
    quantize_weights,
    rate_encode,
    simulate_forward,
    stdp_update,
)

__version__ = "0.1.0"
