"""Shared builders for the canonical two-robot/one-edge pipeline."""

import pytest

from dtpsim.pipeline import (
    ComputeNode,
    DagEdge,
    Fabric,
    LinkDelayModel,
    PipelineDag,
    ServiceTimeModel,
    TaskStage,
)

NODE_PAIRS = [
    ("R1", "E"), ("E", "R1"),
    ("R2", "E"), ("E", "R2"),
    ("R1", "R2"), ("R2", "R1"),
]


def make_fabric():
    return Fabric((
        ComputeNode("R1", "robot"),
        ComputeNode("R2", "robot"),
        ComputeNode("E", "edge"),
    ))


def make_dag(
    means=(2.0, 10.0, 8.0, 2.0),
    cv=0.0,
    base=1.0,
    jitter=0.0,
    loss=0.0,
    edge_scales=(1.0, 1.0, 1.0),
    link_scale=1.0,
):
    """Canonical 4-stage chain; every link shares one delay model."""
    feasible = {
        "T1": frozenset({"R1"}),
        "T2": frozenset({"R1", "E"}),
        "T3": frozenset({"R2", "E"}),
        "T4": frozenset({"R2"}),
    }
    tasks = tuple(
        TaskStage(
            tid,
            feasible[tid],
            {node: ServiceTimeModel(mean, cv) for node in feasible[tid]},
        )
        for tid, mean in zip(("T1", "T2", "T3", "T4"), means)
    )
    edges = (
        DagEdge("T1", "T2", edge_scales[0]),
        DagEdge("T2", "T3", edge_scales[1]),
        DagEdge("T3", "T4", edge_scales[2]),
    )
    links = {
        pair: LinkDelayModel(base, jitter, loss, link_scale) for pair in NODE_PAIRS
    }
    return PipelineDag(tasks, edges, links)


@pytest.fixture
def fabric():
    return make_fabric()


@pytest.fixture
def dag():
    return make_dag()
