"""Candidate QoS estimation for placements that are not currently active.

Three mechanisms, in the order the engine prefers them:

* shadow: aggregate recent shadow cycles (cycles simulated under the
  candidate in the live environment without driving actuation),
* static: Monte Carlo over offline-measured service and delay tables,
* conservative: scale the observed metrics of the active placement by
  pessimistic ratios, as a cheap upper bound.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .metrics import (
    CycleRecord,
    WindowMetrics,
    aggregate_window,
    class_utilization,
    percentile_nearest_rank,
)
from .pipeline import (
    Fabric,
    LinkDelayModel,
    NodeId,
    PipelineDag,
    Placement,
    ServiceTimeModel,
    TaskId,
)
from .sampling import build_cycle_plan, quantize_us, sample_plan_latency

MIN_STATIC_SAMPLES = 100

MECHANISM_STATIC = "static"
MECHANISM_SHADOW = "shadow"
MECHANISM_CONSERVATIVE = "conservative"


@dataclass(frozen=True)
class StaticProfile:
    """Offline-measured lookup tables keyed by (task, node) and node pair."""

    service: Mapping[tuple[TaskId, NodeId], ServiceTimeModel]
    delays: Mapping[tuple[NodeId, NodeId], LinkDelayModel]
    utilization: Mapping[tuple[TaskId, NodeId], float] = field(default_factory=dict)

    @classmethod
    def from_dag(cls, dag: PipelineDag, perturbation: float = 0.0) -> "StaticProfile":
        """Profile equal to the ground-truth models, optionally inflated.

        perturbation scales every mean service time and base delay by
        (1 + perturbation) to study model mismatch; 0 is exact.
        """
        if perturbation < -0.5:
            raise ValueError("perturbation below -0.5 is not meaningful")
        factor = 1.0 + perturbation
        service = {}
        utilization = {}
        for task in dag.tasks:
            for node in task.feasible:
                model = task.service[node]
                service[(task.id, node)] = ServiceTimeModel(
                    model.mean * factor, model.cv, model.floor_fraction
                )
                utilization[(task.id, node)] = task.utilization.get(node, 0.0)
        delays = {
            pair: LinkDelayModel(
                model.base_delay * factor,
                model.jitter_sigma,
                model.loss_probability,
                model.payload_scale,
            )
            for pair, model in dag.links.items()
        }
        return cls(service, delays, utilization)


@dataclass(frozen=True)
class EstimateReport:
    """Predicted window under a candidate placement."""

    placement: str
    metrics: WindowMetrics
    per_node_utilization: Mapping[str, float]
    sample_count: int
    mechanism: str


@dataclass(frozen=True)
class ConservativeRatios:
    """Pessimism factors per metric component; all must be >= 1."""

    latency: float = 1.5
    violation: float = 1.5
    util_robot: float = 1.2
    util_edge: float = 1.2

    def __post_init__(self):
        for name in ("latency", "violation", "util_robot", "util_edge"):
            if getattr(self, name) < 1.0:
                raise ValueError(f"conservative ratio {name} must be >= 1")


def predicted_node_utilization(
    profile: StaticProfile,
    placement: Placement,
    fabric: Fabric,
    period: float,
) -> dict[str, float]:
    """Occupancy model: sum of mean service over period plus static offsets."""
    util = {node.id: 0.0 for node in fabric}
    for task_id, node in placement.assignment.items():
        mean = profile.service[(task_id, node)].mean
        util[node] = util.get(node, 0.0) + mean / period + profile.utilization.get((task_id, node), 0.0)
    return {node: min(1.0, max(0.0, value)) for node, value in util.items()}


def estimate_static(
    profile: StaticProfile,
    dag: PipelineDag,
    placement: Placement,
    fabric: Fabric,
    deadline: float,
    period: float,
    samples: int,
    rng: random.Random,
) -> EstimateReport:
    """Monte Carlo latency prediction from the offline profile.

    Draws ``samples`` end-to-end latencies (including the loss/retransmit
    rule), reports nearest-rank l95 and the fraction violating the
    deadline, and derives utilization from mean occupancy.
    """
    if samples < MIN_STATIC_SAMPLES:
        raise ValueError(f"static estimation needs >= {MIN_STATIC_SAMPLES} samples, got {samples}")
    if deadline > period:
        raise ValueError("deadline must not exceed period")
    plan = build_cycle_plan(dag, placement, service=profile.service, delays=profile.delays)
    deadline_us = quantize_us(deadline)
    period_us = quantize_us(period)
    latencies = []
    violations = 0
    for _ in range(samples):
        latency_us, violated = sample_plan_latency(plan, rng, deadline_us, period_us)
        latencies.append(latency_us / 1000.0)
        if violated:
            violations += 1
    per_node = predicted_node_utilization(profile, placement, fabric, period)
    robot_ids = [n.id for n in fabric.of_kind("robot")]
    edge_ids = [n.id for n in fabric.of_kind("edge")]
    metrics = WindowMetrics(
        window_index=0,
        l95=percentile_nearest_rank(latencies, 0.95),
        violation_rate=violations / samples,
        util_robot=sum(per_node[n] for n in robot_ids) / len(robot_ids) if robot_ids else 0.0,
        util_edge=sum(per_node[n] for n in edge_ids) / len(edge_ids) if edge_ids else 0.0,
    )
    return EstimateReport(placement.name, metrics, per_node, samples, MECHANISM_STATIC)


def update_shadow(
    history: Sequence[CycleRecord],
    placement: str,
    window_size: int,
    period: float,
    fabric: Fabric,
) -> EstimateReport:
    """Aggregate the most recent shadow cycles into a predicted window."""
    if not history:
        raise ValueError("shadow history is empty")
    recent = list(history[-window_size:])
    duration = len(recent) * period
    metrics = aggregate_window(recent, duration, fabric, window_index=0)
    per_node = {
        node.id: class_utilization(recent, duration, [node.id]) for node in fabric
    }
    return EstimateReport(placement, metrics, per_node, len(recent), MECHANISM_SHADOW)


def estimate_conservative(
    observed: WindowMetrics,
    placement: str,
    ratios: ConservativeRatios,
    fabric: Fabric | None = None,
    per_node_utilization: Mapping[str, float] | None = None,
) -> EstimateReport:
    """Upper-bound a candidate by inflating the active placement's window."""
    kind_ratio = {"robot": ratios.util_robot, "edge": ratios.util_edge, "cloud": 1.0}
    per_node = {}
    if per_node_utilization and fabric is not None:
        per_node = {
            node.id: min(1.0, per_node_utilization.get(node.id, 0.0) * kind_ratio[node.kind])
            for node in fabric
        }
    metrics = WindowMetrics(
        window_index=0,
        l95=observed.l95 * ratios.latency,
        violation_rate=min(1.0, observed.violation_rate * ratios.violation),
        util_robot=min(1.0, observed.util_robot * ratios.util_robot),
        util_edge=min(1.0, observed.util_edge * ratios.util_edge),
    )
    return EstimateReport(placement, metrics, per_node, 0, MECHANISM_CONSERVATIVE)


@dataclass(frozen=True)
class EstimatorConfig:
    """How the engine produces candidate estimates each window.

    mode "auto" prefers shadow aggregation once at least half a window of
    shadow records exists and falls back to static profiling; "static"
    never uses shadow records; "conservative" scales observed metrics.
    """

    mode: str = "auto"
    static_samples: int = 2000
    profile_perturbation: float = 0.0
    ratios: ConservativeRatios = field(default_factory=ConservativeRatios)

    def __post_init__(self):
        if self.mode not in ("auto", "static", "conservative"):
            raise ValueError(f"unknown estimator mode {self.mode!r}")
        if self.static_samples < MIN_STATIC_SAMPLES:
            raise ValueError(f"static_samples must be >= {MIN_STATIC_SAMPLES}")
