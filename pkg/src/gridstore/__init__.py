"""Policy library and discrete-event simulator for robotic grid storage."""

from .config import (
    ConfigError,
    GridConfig,
    PopularityConfig,
    RobotConfig,
    ScenarioConfig,
    desk_config,
    load,
    loads,
)
from .costs import (
    CostDomainError,
    CostTable,
    build_cost_table,
    dig_cost_in_stack,
    expected_cost,
    layer_probabilities,
    placement_cost,
    retrieval_cost,
)
from .engine import (
    EventLog,
    RobotKinematics,
    Scenario,
    Simulation,
    generate_requests,
    gripper_time,
    prepare_initial,
    randomize_from_optimal,
    run,
    travel_time,
)
from .model import (
    Bgc,
    BinCatalog,
    GridSpec,
    ValidationError,
    fill_levels,
    normalize_catalog,
    pad_with_empty_bins,
    surface_layer,
    validate_initial_bgc,
)
from .policies import (
    LcpState,
    LogicalGrid,
    PolicyKind,
    baseline_select_storage,
    buffer_check,
    dig_placement_plan,
    lcp_select_storage,
    run_sequential_lcp,
    select_and_apply,
)
from .report import (
    BatchResult,
    Comparison,
    ReportBundle,
    compare_policies,
    run_batch,
    run_report,
    summarize,
)
from .solver import (
    assign_layer_groups,
    build_optimal_bgc,
    classify_stack,
    coverage,
    distance_to_equivalent_optimal,
    enumerate_feasible_bgcs,
    expected_transform_requests,
    is_equivalent_optimal,
    is_layer_complete,
    is_quasi_equivalent_optimal,
    optimal_empty_level,
    stack_distance,
    stack_distance_to_complete,
)

__version__ = "0.1.0"
