"""Weighted placement cost and constrained candidate selection.

The cost of running a window under a placement is a weighted sum of the
normalized window metrics plus a switching penalty against the placement
of the previous window.  Selection minimizes cost over the candidates
subject to a latency bound and per-node utilization caps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .metrics import NormalizedMetrics, WindowMetrics
from .pipeline import Placement


@dataclass(frozen=True)
class Weights:
    """Cost weights. Violations must dominate latency, latency must
    dominate switching, or the controller will trade deadline misses for
    stability; that ordering is warned about, not enforced."""

    alpha_l: float = 1.0
    alpha_v: float = 2.0
    alpha_r: float = 0.5
    alpha_e: float = 0.25
    alpha_s: float = 0.25

    def __post_init__(self):
        for name in ("alpha_l", "alpha_v", "alpha_r", "alpha_e", "alpha_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not (self.alpha_v > self.alpha_l > self.alpha_s):
            warnings.warn(
                "weights do not satisfy alpha_v > alpha_l > alpha_s; "
                "deadline violations may not dominate the cost",
                UserWarning,
                stacklevel=2,
            )


@dataclass(frozen=True)
class Constraints:
    """Hard feasibility bounds: window l95 and per-node utilization."""

    l95_max: float
    util_max: float = 0.95

    def __post_init__(self):
        if self.l95_max <= 0:
            raise ValueError("l95_max must be > 0")
        if not 0.0 < self.util_max <= 1.0:
            raise ValueError("util_max must be in (0, 1]")


def switching_penalty(current: Placement, previous: Placement) -> float:
    """Fraction of tasks whose node changes between two placements."""
    if set(current.assignment) != set(previous.assignment):
        raise ValueError(
            f"placements cover different task sets: {sorted(current.assignment)} "
            f"vs {sorted(previous.assignment)}"
        )
    tasks = current.assignment
    moved = sum(1 for t in tasks if current.assignment[t] != previous.assignment[t])
    return moved / len(tasks)


def total_cost(
    normalized: NormalizedMetrics,
    current: Placement,
    previous: Placement,
    weights: Weights,
) -> float:
    """Scalar cost of one window under ``current`` after ``previous``."""
    for value in normalized:
        if not math.isfinite(value) or value < 0:
            raise ValueError(f"normalized metrics must be finite and >= 0, got {normalized}")
    return (
        weights.alpha_l * normalized.l95
        + weights.alpha_v * normalized.violation_rate
        + weights.alpha_r * normalized.util_robot
        + weights.alpha_e * normalized.util_edge
        + weights.alpha_s * switching_penalty(current, previous)
    )


@dataclass(frozen=True)
class ScoredCandidate:
    """A candidate placement with its predicted window and cost."""

    placement: Placement
    metrics: WindowMetrics
    per_node_utilization: Mapping[str, float] = field(default_factory=dict)
    cost: float = 0.0


def is_feasible(candidate: ScoredCandidate, constraints: Constraints) -> bool:
    if candidate.metrics.l95 > constraints.l95_max:
        return False
    return all(u <= constraints.util_max for u in candidate.per_node_utilization.values())


def select_placement(
    scored: Sequence[ScoredCandidate],
    constraints: Constraints,
    incumbent: str,
) -> tuple[ScoredCandidate, bool]:
    """Constrained cost argmin over scored candidates.

    Returns (choice, feasible_flag).  If no candidate satisfies the
    constraints the unconstrained minimum is returned with the flag False
    so the caller can surface the violation.  Ties fall to the incumbent,
    then to the candidate needing the smaller move away from the
    incumbent, then to candidate order.
    """
    if not scored:
        raise ValueError("select_placement needs at least one candidate")
    by_name = {c.placement.name: c for c in scored}
    if incumbent not in by_name:
        raise ValueError(f"incumbent {incumbent!r} is not among the candidates")
    incumbent_placement = by_name[incumbent].placement

    pool = [c for c in scored if is_feasible(c, constraints)]
    feasible = bool(pool)
    if not pool:
        pool = list(scored)

    def rank(item: tuple[int, ScoredCandidate]):
        order, candidate = item
        return (
            candidate.cost,
            0 if candidate.placement.name == incumbent else 1,
            switching_penalty(candidate.placement, incumbent_placement),
            order,
        )

    _, best = min(enumerate(pool), key=rank)
    return best, feasible
