"""Pipeline-parallel schedules with activation offload: builders, planner, simulator."""

from .costs import (
    ModelSpec,
    HardwareSpec,
    PassCosts,
    activation_bytes_per_layer,
    layer_output_ratio,
    compute_k,
    offload_round_trip,
    estimate_pass_costs,
)
from .ir import (
    PassKind,
    Pass,
    BuildingBlock,
    Schedule,
    MemoryTimeline,
    Violation,
    ScheduleError,
    InfeasibleIntervalError,
    lifespan,
    uniform_repeat,
    interleave_compose,
    validate,
    memory_timeline,
    stage_contribution_at_peak,
    emit_schedule,
    parse_schedule,
)
from .builders import (
    build_1f1b,
    build_interleaved_1f1b,
    build_gis,
    build_gis_g,
    build_gis_h,
    build_po,
    build_1f1b_full_offload,
    po_block,
    extract_block,
    BUILDERS,
)
from .offload import (
    OffloadPlan,
    Transfer,
    HostBufferLayout,
    NodeAssignment,
    select_offload_stages,
    plan_slots,
    apply_topology_sync,
    pack_host_bins,
    assign_ranks_to_nodes,
)
from .sim import (
    SimTrace,
    ContentionModel,
    DeadlockError,
    simulate,
    bubble_time,
    peak_memory,
    host_peak_memory,
)
from . import analysis, render

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
