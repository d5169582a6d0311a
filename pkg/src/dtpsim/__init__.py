"""Deterministic simulator and placement controller for staged pipelines.

The package models a fixed sensing-perception-planning-control chain
whose middle stages can run either on robot nodes or on a shared edge
server.  A window-based controller re-scores the candidate placements
from observed metrics and migrates when the predicted improvement
clears a threshold.
"""

from .controller import (
    ACTION_HOLD,
    ACTION_MIGRATE,
    ControllerConfig,
    ControllerState,
    Decision,
    EnvironmentFailure,
    migration_count,
    on_window_end,
    run_horizon,
)
from .cost import (
    Constraints,
    ScoredCandidate,
    Weights,
    is_feasible,
    select_placement,
    switching_penalty,
    total_cost,
)
from .estimator import (
    ConservativeRatios,
    EstimateReport,
    EstimatorConfig,
    StaticProfile,
    estimate_conservative,
    estimate_static,
    predicted_node_utilization,
    update_shadow,
)
from .harness import (
    Check,
    ConfigError,
    Expectation,
    ResolvedConfig,
    ScenarioReport,
    ScenarioSpec,
    load_config,
    render_report,
    run_scenario,
)
from .metrics import (
    CycleRecord,
    NormalizationTargets,
    NormalizedMetrics,
    WindowMetrics,
    aggregate_window,
    class_utilization,
    normalize,
    percentile_nearest_rank,
)
from .pipeline import (
    HYBRID,
    LOCAL,
    STATIC_OFFLOAD,
    CandidateSet,
    ComputeNode,
    DagEdge,
    Fabric,
    InfeasiblePlacementError,
    LinkDelayModel,
    PipelineDag,
    Placement,
    ServiceTimeModel,
    TaskStage,
    ValidationReport,
    canonical_candidates,
    check_feasible,
    nominal_latency,
    validate_pipeline,
)
from .sampling import quantize_us, sample_link, sample_service, traverse_edge
from .simulation import (
    FaultInjection,
    SimConfig,
    SimTrace,
    StressProfile,
    run_simulation,
    write_cycles_csv,
    write_decisions_jsonl,
    write_summary_json,
    write_windows_csv,
)
from .streams import RandomStreams, derive_seed

__version__ = "0.1.0"

__all__ = [
    "ACTION_HOLD",
    "ACTION_MIGRATE",
    "CandidateSet",
    "Check",
    "ComputeNode",
    "ConfigError",
    "ConservativeRatios",
    "Constraints",
    "ControllerConfig",
    "ControllerState",
    "CycleRecord",
    "DagEdge",
    "Decision",
    "EnvironmentFailure",
    "EstimateReport",
    "EstimatorConfig",
    "Expectation",
    "Fabric",
    "FaultInjection",
    "HYBRID",
    "InfeasiblePlacementError",
    "LOCAL",
    "LinkDelayModel",
    "NormalizationTargets",
    "NormalizedMetrics",
    "PipelineDag",
    "Placement",
    "RandomStreams",
    "ResolvedConfig",
    "STATIC_OFFLOAD",
    "ScenarioReport",
    "ScenarioSpec",
    "ScoredCandidate",
    "ServiceTimeModel",
    "SimConfig",
    "SimTrace",
    "StressProfile",
    "TaskStage",
    "ValidationReport",
    "WindowMetrics",
    "aggregate_window",
    "canonical_candidates",
    "check_feasible",
    "class_utilization",
    "derive_seed",
    "estimate_conservative",
    "estimate_static",
    "is_feasible",
    "load_config",
    "migration_count",
    "nominal_latency",
    "normalize",
    "on_window_end",
    "percentile_nearest_rank",
    "predicted_node_utilization",
    "quantize_us",
    "render_report",
    "run_horizon",
    "run_scenario",
    "run_simulation",
    "sample_link",
    "sample_service",
    "select_placement",
    "switching_penalty",
    "total_cost",
    "traverse_edge",
    "update_shadow",
    "write_cycles_csv",
    "write_decisions_jsonl",
    "write_summary_json",
    "write_windows_csv",
]
