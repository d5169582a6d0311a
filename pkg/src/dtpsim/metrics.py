"""Per-cycle records, per-window QoS metrics, and normalization.

A window is W consecutive control cycles.  The controller never sees raw
cycles; it sees one WindowMetrics per window: the 95th-percentile latency,
the deadline violation rate, and the mean utilization of the robot and
edge node classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

from .pipeline import Fabric

# guards against float fuzz in p * n for exact-integer products; config
# percentiles carry far fewer than 9 decimals
_RANK_EPS = 1e-9


def percentile_nearest_rank(samples: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: element at rank ceil(p * n) of the sort.

    Always returns a member of ``samples``; no interpolation.
    """
    if not samples:
        raise ValueError("percentile of an empty sample list")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"percentile fraction must be in (0, 1], got {p}")
    ordered = sorted(samples)
    rank = math.ceil(p * len(ordered) - _RANK_EPS)
    return ordered[max(rank, 1) - 1]


@dataclass(frozen=True, slots=True)
class CycleRecord:
    """Outcome of one control cycle.

    busy_time maps node id to the milliseconds of compute the cycle put on
    that node (including any exogenous stress load folded in by the
    engine).  release_ms and placement are carried for trace output.
    """

    cycle_index: int
    e2e_latency: float
    deadline_met: bool
    busy_time: Mapping[str, float]
    release_ms: float = 0.0
    placement: str = ""

    def __post_init__(self):
        if self.cycle_index < 0:
            raise ValueError("cycle_index must be >= 0")
        if self.e2e_latency < 0:
            raise ValueError("e2e_latency must be >= 0")


@dataclass(frozen=True)
class WindowMetrics:
    """Aggregated QoS of one window (window_index 0 marks a prediction)."""

    window_index: int
    l95: float
    violation_rate: float
    util_robot: float
    util_edge: float

    def __post_init__(self):
        if self.window_index < 0:
            raise ValueError("window_index must be >= 0")
        if self.l95 < 0:
            raise ValueError("l95 must be >= 0")
        for name in ("violation_rate", "util_robot", "util_edge"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class NormalizationTargets:
    """Reference scales for the cost function: latency in ms, utils in (0, 1]."""

    latency: float
    util_robot: float = 0.8
    util_edge: float = 0.8

    def __post_init__(self):
        if self.latency <= 0:
            raise ValueError("latency target must be > 0")
        for name in ("util_robot", "util_edge"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} target must be in (0, 1], got {value}")


class NormalizedMetrics(NamedTuple):
    l95: float
    violation_rate: float
    util_robot: float
    util_edge: float


def class_utilization(
    records: Sequence[CycleRecord],
    window_duration: float,
    nodes: Sequence[str],
) -> float:
    """Mean busy fraction across ``nodes`` over the window, clamped to [0, 1]."""
    if not nodes:
        return 0.0
    busy = 0.0
    for record in records:
        for node in nodes:
            busy += record.busy_time.get(node, 0.0)
    return min(1.0, max(0.0, busy / (window_duration * len(nodes))))


def aggregate_window(
    records: Sequence[CycleRecord],
    window_duration: float,
    fabric: Fabric,
    window_index: int = 1,
) -> WindowMetrics:
    """Collapse one window of cycle records into WindowMetrics.

    window_duration is W * P in milliseconds and is the utilization
    denominator per node.
    """
    if not records:
        raise ValueError("aggregate_window requires at least one record")
    if window_duration <= 0:
        raise ValueError("window_duration must be > 0")
    latencies = [r.e2e_latency for r in records]
    violations = sum(1 for r in records if not r.deadline_met)
    robot_ids = [n.id for n in fabric.of_kind("robot")]
    edge_ids = [n.id for n in fabric.of_kind("edge")]
    return WindowMetrics(
        window_index=window_index,
        l95=percentile_nearest_rank(latencies, 0.95),
        violation_rate=violations / len(records),
        util_robot=class_utilization(records, window_duration, robot_ids),
        util_edge=class_utilization(records, window_duration, edge_ids),
    )


def normalize(metrics: WindowMetrics, targets: NormalizationTargets) -> NormalizedMetrics:
    """Scale metrics by their targets; violation rate is already in [0, 1]."""
    return NormalizedMetrics(
        l95=metrics.l95 / targets.latency,
        violation_rate=metrics.violation_rate,
        util_robot=metrics.util_robot / targets.util_robot,
        util_edge=metrics.util_edge / targets.util_edge,
    )
