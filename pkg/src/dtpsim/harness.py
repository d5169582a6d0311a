"""Scenario harness: declarative config, named scenarios, reports.

A single YAML document describes the fabric, the task chain, timing,
cost weights, controller settings, and a set of named scenarios.  Every
key has a shipped default, so a config naming only a scenario still
resolves to a complete runnable document, and unknown keys are rejected
with their full path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

from .controller import ControllerConfig
from .cost import Constraints, Weights
from .estimator import ConservativeRatios, EstimatorConfig
from .metrics import NormalizationTargets
from .pipeline import (
    CandidateSet,
    ComputeNode,
    DagEdge,
    Fabric,
    LinkDelayModel,
    PipelineDag,
    ServiceTimeModel,
    TaskStage,
    canonical_candidates,
    validate_pipeline,
)
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

CONTROLLER_POLICY = "DTP"


class ConfigError(ValueError):
    """The configuration document is malformed or inconsistent."""


# ---------------------------------------------------------------------------
# defaults

DEFAULT_CONFIG: dict = {
    "fabric": {
        "nodes": [
            {"id": "R1", "kind": "robot", "utilization_target": 0.8, "utilization_cap": 0.95},
            {"id": "R2", "kind": "robot", "utilization_target": 0.8, "utilization_cap": 0.95},
            {"id": "E", "kind": "edge", "utilization_target": 0.8, "utilization_cap": 0.95},
        ]
    },
    "dag": {
        "tasks": [
            {"id": "T1", "feasible": ["R1"], "service": {"R1": {"mean": 2.0, "cv": 0.2}}},
            {
                "id": "T2",
                "feasible": ["R1", "E"],
                "service": {"R1": {"mean": 10.0, "cv": 0.2}, "E": {"mean": 10.0, "cv": 0.2}},
            },
            {
                "id": "T3",
                "feasible": ["R2", "E"],
                "service": {"R2": {"mean": 8.0, "cv": 0.2}, "E": {"mean": 8.0, "cv": 0.2}},
            },
            {"id": "T4", "feasible": ["R2"], "service": {"R2": {"mean": 2.0, "cv": 0.2}}},
        ],
        # dense world models outweigh camera frames outweigh setpoints
        "edges": [
            {"from": "T1", "to": "T2", "payload_scale": 3.0},
            {"from": "T2", "to": "T3", "payload_scale": 4.0},
            {"from": "T3", "to": "T4", "payload_scale": 0.5},
        ],
        "links": [
            {"from": "R1", "to": "E", "base_delay": 1.0, "jitter_sigma": 0.1},
            {"from": "E", "to": "R1", "base_delay": 1.0, "jitter_sigma": 0.1},
            {"from": "E", "to": "R2", "base_delay": 1.0, "jitter_sigma": 0.1},
            {"from": "R2", "to": "E", "base_delay": 1.0, "jitter_sigma": 0.1},
            {"from": "R1", "to": "R2", "base_delay": 1.0, "jitter_sigma": 0.1},
            {"from": "R2", "to": "R1", "base_delay": 1.0, "jitter_sigma": 0.1},
        ],
    },
    "sim": {
        "period": 40.0,
        "deadline": 40.0,
        "horizon": 200,
        "seed": 42,
        "clock_resolution_us": 1,
    },
    "weights": {
        "alpha_l": 1.0,
        "alpha_v": 2.0,
        "alpha_r": 0.5,
        "alpha_e": 0.25,
        "alpha_s": 0.25,
    },
    "constraints": {"l95_max": 40.0, "util_max": 0.95},
    "controller": {
        "window_size": 50,
        "delta_min": 0.1,
        "n_min": 3,
        "initial_placement": "LOC",
        "latency_target": 40.0,
    },
    "estimator": {
        "mode": "auto",
        "static_samples": 2000,
        "profile_perturbation": 0.0,
        "conservative_ratios": {
            "latency": 1.5,
            "violation": 1.5,
            "util_robot": 1.2,
            "util_edge": 1.2,
        },
    },
    "scenarios": {
        "baseline": {
            "stresses": [],
            "faults": [],
            "sim": {},
            "controller": {},
            "policies": ["LOC", "SO", "DTP"],
            "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
            "expected": {
                "dominant": ["LOC"],
                "min_fraction": 0.6,
                "min_seed_fraction": 0.8,
                "forbidden": ["SO"],
            },
            "checks": [],
        },
        "robot-stress": {
            "stresses": [
                {
                    "target": "R1",
                    "start_window": 1,
                    "end_window": None,
                    "slowdown": 3.0,
                    "exogenous_load": 0.0,
                }
            ],
            "faults": [],
            "sim": {},
            "controller": {},
            "policies": ["LOC", "SO", "DTP"],
            "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
            "expected": {
                "dominant": ["SO"],
                "min_fraction": 0.7,
                "min_seed_fraction": 0.8,
                "forbidden": [],
            },
            "checks": [
                {"kind": "policy_violation_above", "policy": "LOC", "threshold": 0.40},
                {"kind": "post_convergence_violation_below", "policy": "DTP", "threshold": 0.05},
            ],
        },
        "edge-stress": {
            "stresses": [
                {
                    "target": "E",
                    "start_window": 1,
                    "end_window": None,
                    "slowdown": 3.0,
                    "exogenous_load": 0.0,
                }
            ],
            "faults": [],
            "sim": {},
            "controller": {},
            "policies": ["LOC", "SO", "DTP"],
            "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
            "expected": {
                "dominant": ["LOC", "HYB"],
                "min_fraction": 0.7,
                "min_seed_fraction": 0.8,
                "forbidden": [],
            },
            "checks": [],
        },
        "network-impairment": {
            "stresses": [],
            "faults": [
                {
                    "links": [["R1", "E"], ["E", "R1"], ["E", "R2"], ["R2", "E"]],
                    "mu": 25.0,
                    "sigma": 5.0,
                    "loss_probability": 0.02,
                    "start_window": 1,
                    "end_window": None,
                    "additive": False,
                }
            ],
            "sim": {},
            "controller": {"initial_placement": "SO"},
            "policies": ["LOC", "SO", "DTP"],
            "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
            "expected": {
                "dominant": ["LOC"],
                "min_fraction": 0.7,
                "min_seed_fraction": 0.8,
                "forbidden": [],
            },
            "checks": [
                {
                    "kind": "violation_ratio_at_least",
                    "policy": "SO",
                    "versus": "DTP",
                    "ratio": 5.0,
                    "interval": "fault",
                }
            ],
        },
    },
}

_SCALAR_SECTIONS = ("sim", "weights", "constraints", "controller", "estimator")


def _check_keys(mapping: Mapping, allowed: Sequence[str], path: str) -> None:
    if not isinstance(mapping, Mapping):
        raise ConfigError(f"{path} must be a mapping, got {type(mapping).__name__}")
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key: {path}.{key}")


def _merge_section(defaults: Mapping, override: Mapping, path: str) -> dict:
    _check_keys(override, list(defaults), path)
    merged = dict(defaults)
    for key, value in override.items():
        if isinstance(defaults.get(key), Mapping) and isinstance(value, Mapping):
            merged[key] = _merge_section(defaults[key], value, f"{path}.{key}")
        else:
            merged[key] = value
    return merged


def _resolve(document: Mapping) -> dict:
    _check_keys(document, list(DEFAULT_CONFIG), "config")
    resolved = {}
    for section, defaults in DEFAULT_CONFIG.items():
        override = document.get(section, {})
        if section == "fabric":
            _check_keys(override, ["nodes"], "fabric")
            resolved[section] = {"nodes": override.get("nodes", defaults["nodes"])}
        elif section == "dag":
            _check_keys(override, ["tasks", "edges", "links"], "dag")
            resolved[section] = {
                key: override.get(key, defaults[key]) for key in ("tasks", "edges", "links")
            }
        elif section == "scenarios":
            merged = {name: spec for name, spec in defaults.items()}
            if not isinstance(override, Mapping):
                raise ConfigError("scenarios must be a mapping")
            for name, spec in override.items():
                base = merged.get(name, _EMPTY_SCENARIO)
                merged[name] = _merge_scenario(base, spec, f"scenarios.{name}")
            resolved[section] = merged
        else:
            resolved[section] = _merge_section(defaults, override, section)
    return resolved


_EMPTY_SCENARIO: dict = {
    "stresses": [],
    "faults": [],
    "sim": {},
    "controller": {},
    "policies": ["LOC", "SO", "DTP"],
    "seeds": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
    "expected": {
        "dominant": ["LOC"],
        "min_fraction": 0.6,
        "min_seed_fraction": 0.8,
        "forbidden": [],
    },
    "checks": [],
}

_STRESS_KEYS = ("target", "start_window", "end_window", "slowdown", "exogenous_load")
_FAULT_KEYS = (
    "links",
    "mu",
    "sigma",
    "loss_probability",
    "start_window",
    "end_window",
    "additive",
)
_CHECK_KEYS = ("kind", "policy", "versus", "threshold", "ratio", "interval")


def _merge_scenario(base: Mapping, override: Mapping, path: str) -> dict:
    _check_keys(override, list(_EMPTY_SCENARIO), path)
    merged = {key: base[key] for key in _EMPTY_SCENARIO}
    for key, value in override.items():
        if key == "expected":
            merged[key] = _merge_section(base["expected"], value, f"{path}.expected")
        elif key in ("sim", "controller"):
            allowed = list(DEFAULT_CONFIG[key])
            _check_keys(value, allowed, f"{path}.{key}")
            merged[key] = {**base[key], **value}
        else:
            merged[key] = value
    for i, stress in enumerate(merged["stresses"]):
        _check_keys(stress, _STRESS_KEYS, f"{path}.stresses[{i}]")
    for i, fault in enumerate(merged["faults"]):
        _check_keys(fault, _FAULT_KEYS, f"{path}.faults[{i}]")
    for i, check in enumerate(merged["checks"]):
        _check_keys(check, _CHECK_KEYS, f"{path}.checks[{i}]")
    return merged


# ---------------------------------------------------------------------------
# builders


def _build(factory, path: str, /, *args, **kwargs):
    try:
        return factory(*args, **kwargs)
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def build_fabric(raw: Mapping) -> Fabric:
    nodes = []
    for i, spec in enumerate(raw["nodes"]):
        _check_keys(spec, ["id", "kind", "utilization_target", "utilization_cap"], f"fabric.nodes[{i}]")
        nodes.append(
            _build(
                ComputeNode,
                f"fabric.nodes[{i}]",
                id=spec["id"],
                kind=spec.get("kind", "robot"),
                utilization_target=spec.get("utilization_target", 0.8),
                utilization_cap=spec.get("utilization_cap", 0.95),
            )
        )
    return _build(Fabric, "fabric", tuple(nodes))


def build_dag(raw: Mapping) -> PipelineDag:
    tasks = []
    for i, spec in enumerate(raw["tasks"]):
        path = f"dag.tasks[{i}]"
        _check_keys(spec, ["id", "feasible", "service", "utilization"], path)
        service = {}
        for node, model in spec.get("service", {}).items():
            _check_keys(model, ["mean", "cv", "floor_fraction"], f"{path}.service.{node}")
            service[node] = _build(
                ServiceTimeModel,
                f"{path}.service.{node}",
                mean=model["mean"],
                cv=model.get("cv", 0.0),
                floor_fraction=model.get("floor_fraction", 0.01),
            )
        tasks.append(
            _build(
                TaskStage,
                path,
                id=spec["id"],
                feasible=frozenset(spec["feasible"]),
                service=service,
                utilization=dict(spec.get("utilization", {})),
            )
        )
    edges = []
    for i, spec in enumerate(raw["edges"]):
        path = f"dag.edges[{i}]"
        _check_keys(spec, ["from", "to", "payload_scale"], path)
        edges.append(
            _build(DagEdge, path, spec["from"], spec["to"], spec.get("payload_scale", 1.0))
        )
    links = {}
    for i, spec in enumerate(raw["links"]):
        path = f"dag.links[{i}]"
        _check_keys(
            spec,
            ["from", "to", "base_delay", "jitter_sigma", "loss_probability", "payload_scale"],
            path,
        )
        links[(spec["from"], spec["to"])] = _build(
            LinkDelayModel,
            path,
            base_delay=spec["base_delay"],
            jitter_sigma=spec.get("jitter_sigma", 0.0),
            loss_probability=spec.get("loss_probability", 0.0),
            payload_scale=spec.get("payload_scale", 1.0),
        )
    return PipelineDag(tuple(tasks), tuple(edges), links)


def build_targets(raw: Mapping, fabric: Fabric) -> NormalizationTargets:
    robots = fabric.of_kind("robot")
    edges = fabric.of_kind("edge")
    return _build(
        NormalizationTargets,
        "controller.latency_target",
        latency=raw["controller"]["latency_target"],
        util_robot=(
            sum(n.utilization_target for n in robots) / len(robots) if robots else 0.8
        ),
        util_edge=(sum(n.utilization_target for n in edges) / len(edges) if edges else 0.8),
    )


def build_estimator(raw: Mapping) -> EstimatorConfig:
    section = raw["estimator"]
    ratios = section["conservative_ratios"]
    return _build(
        EstimatorConfig,
        "estimator",
        mode=section["mode"],
        static_samples=section["static_samples"],
        profile_perturbation=section["profile_perturbation"],
        ratios=_build(
            ConservativeRatios,
            "estimator.conservative_ratios",
            latency=ratios["latency"],
            violation=ratios["violation"],
            util_robot=ratios["util_robot"],
            util_edge=ratios["util_edge"],
        ),
    )


@dataclass(frozen=True)
class Expectation:
    dominant: tuple[str, ...]
    min_fraction: float
    min_seed_fraction: float
    forbidden: tuple[str, ...] = ()


@dataclass(frozen=True)
class Check:
    kind: str
    policy: str = ""
    versus: str = ""
    threshold: float = 0.0
    ratio: float = 0.0
    interval: str = "all"


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    sim: SimConfig
    stresses: tuple[StressProfile, ...]
    faults: tuple[FaultInjection, ...]
    policies: tuple[str, ...]
    seeds: tuple[int, ...]
    controller_overrides: Mapping[str, Any]
    expected: Expectation
    checks: tuple[Check, ...] = ()


@dataclass(frozen=True)
class ResolvedConfig:
    """Fully-defaulted configuration plus the objects built from it."""

    raw: dict
    fabric: Fabric
    dag: PipelineDag
    candidates: CandidateSet
    sim: SimConfig
    weights: Weights
    constraints: Constraints
    targets: NormalizationTargets
    estimator: EstimatorConfig
    scenarios: Mapping[str, ScenarioSpec] = field(default_factory=dict)

    def controller_config(self, overrides: Mapping[str, Any] | None = None) -> ControllerConfig:
        section = dict(self.raw["controller"])
        section.update(overrides or {})
        return _build(
            ControllerConfig,
            "controller",
            window_size=int(section["window_size"]),
            candidates=self.candidates,
            weights=self.weights,
            constraints=self.constraints,
            targets=self.targets,
            delta_min=float(section["delta_min"]),
            n_min=int(section["n_min"]),
            initial_placement=section["initial_placement"],
        )


def _build_scenario(name: str, raw_scenario: Mapping, sim: SimConfig) -> ScenarioSpec:
    sim_overrides = raw_scenario["sim"]
    scenario_sim = _build(
        SimConfig,
        f"scenarios.{name}.sim",
        period=sim_overrides.get("period", sim.period),
        deadline=sim_overrides.get("deadline", sim.deadline),
        horizon=sim_overrides.get("horizon", sim.horizon),
        seed=sim_overrides.get("seed", sim.seed),
        clock_resolution_us=sim_overrides.get("clock_resolution_us", sim.clock_resolution_us),
    )
    horizon = scenario_sim.horizon

    def window_or(value, default):
        return default if value is None else int(value)

    stresses = []
    for i, spec in enumerate(raw_scenario["stresses"]):
        stresses.append(
            _build(
                StressProfile,
                f"scenarios.{name}.stresses[{i}]",
                target=spec["target"],
                start_window=window_or(spec.get("start_window", 1), 1),
                end_window=window_or(spec.get("end_window"), max(horizon, 1)),
                slowdown=spec.get("slowdown", 1.0),
                exogenous_load=spec.get("exogenous_load", 0.0),
            )
        )
    faults = []
    for i, spec in enumerate(raw_scenario["faults"]):
        faults.append(
            _build(
                FaultInjection,
                f"scenarios.{name}.faults[{i}]",
                links=tuple((a, b) for a, b in spec["links"]),
                mu=spec["mu"],
                sigma=spec.get("sigma", 0.0),
                loss_probability=spec.get("loss_probability", 0.0),
                start_window=window_or(spec.get("start_window", 1), 1),
                end_window=window_or(spec.get("end_window"), max(horizon, 1)),
                additive=bool(spec.get("additive", False)),
            )
        )
    expected_raw = raw_scenario["expected"]
    expectation = Expectation(
        dominant=tuple(expected_raw["dominant"]),
        min_fraction=float(expected_raw["min_fraction"]),
        min_seed_fraction=float(expected_raw["min_seed_fraction"]),
        forbidden=tuple(expected_raw["forbidden"]),
    )
    checks = tuple(
        Check(
            kind=spec["kind"],
            policy=spec.get("policy", ""),
            versus=spec.get("versus", ""),
            threshold=float(spec.get("threshold", 0.0)),
            ratio=float(spec.get("ratio", 0.0)),
            interval=spec.get("interval", "all"),
        )
        for spec in raw_scenario["checks"]
    )
    return ScenarioSpec(
        name=name,
        sim=scenario_sim,
        stresses=tuple(stresses),
        faults=tuple(faults),
        policies=tuple(raw_scenario["policies"]),
        seeds=tuple(int(s) for s in raw_scenario["seeds"]),
        controller_overrides=dict(raw_scenario["controller"]),
        expected=expectation,
        checks=checks,
    )


def load_config(path: str | Path | None = None) -> ResolvedConfig:
    """Load and resolve a config document; None loads pure defaults."""
    document: Mapping = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        try:
            document = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if not isinstance(document, Mapping):
            raise ConfigError("config must be a mapping of sections")
    raw = _resolve(document)

    fabric = build_fabric(raw["fabric"])
    dag = build_dag(raw["dag"])
    report = validate_pipeline(dag, fabric)
    if not report.ok:
        raise ConfigError("invalid pipeline: " + "; ".join(report.problems))
    candidates = _build(canonical_candidates, "dag", dag)
    sim = _build(SimConfig, "sim", **raw["sim"])
    weights = _build(Weights, "weights", **raw["weights"])
    constraints = _build(Constraints, "constraints", **raw["constraints"])
    targets = build_targets(raw, fabric)
    estimator = build_estimator(raw)
    scenarios = {
        name: _build_scenario(name, spec, sim) for name, spec in raw["scenarios"].items()
    }
    config = ResolvedConfig(
        raw=raw,
        fabric=fabric,
        dag=dag,
        candidates=candidates,
        sim=sim,
        weights=weights,
        constraints=constraints,
        targets=targets,
        estimator=estimator,
        scenarios=scenarios,
    )
    for name, spec in scenarios.items():
        for policy in spec.policies:
            if policy != CONTROLLER_POLICY and policy not in candidates.names():
                raise ConfigError(f"scenarios.{name}: unknown policy {policy!r}")
        config.controller_config(spec.controller_overrides)  # fails fast on bad overrides
    return config


def echo_config(config: ResolvedConfig, outdir: Path) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "resolved_config.yaml"
    path.write_text(yaml.safe_dump(config.raw, sort_keys=True))
    return path


# ---------------------------------------------------------------------------
# running scenarios


@dataclass(frozen=True)
class RunResult:
    policy: str
    seed: int
    summary: Mapping[str, Any]
    window_violations: tuple[float, ...]

    @property
    def window_placements(self) -> Sequence[str]:
        return self.summary["window_placements"]


@dataclass
class ExpectationResult:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


@dataclass
class ScenarioReport:
    scenario: str
    results: dict[str, list[RunResult]]
    expectations: list[ExpectationResult]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.expectations)

    def to_dict(self) -> dict:
        policies = {}
        for policy, runs in self.results.items():
            policies[policy] = {
                "seeds": [r.seed for r in runs],
                "mean_violation_rate": _mean([r.summary["violation_rate"] for r in runs]),
                "mean_l95_ms": _mean([r.summary["l95_latency_ms"] for r in runs]),
                "mean_util_robot": _mean([r.summary["mean_util_robot"] for r in runs]),
                "mean_util_edge": _mean([r.summary["mean_util_edge"] for r in runs]),
                "mean_migrations": _mean([r.summary["migrations"] for r in runs]),
                "per_seed": [dict(r.summary) for r in runs],
            }
        return {
            "scenario": self.scenario,
            "passed": self.passed,
            "policies": policies,
            "expectations": [e.to_dict() for e in self.expectations],
        }


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def post_convergence_windows(summary: Mapping[str, Any]) -> list[int]:
    """1-based window indices after convergence.

    Convergence starts after the first migration or after 20% of the
    horizon, whichever comes later.
    """
    horizon = len(summary["window_placements"])
    first = summary.get("first_migration_window") or 0
    burn = max(first, horizon // 5)
    return [k for k in range(1, horizon + 1) if k > burn]


def fault_windows(spec: ScenarioSpec) -> list[int]:
    horizon = spec.sim.horizon
    if not spec.faults:
        return list(range(1, horizon + 1))
    active = set()
    for fault in spec.faults:
        active.update(range(fault.start_window, min(fault.end_window, horizon) + 1))
    return sorted(active)


def run_scenario(
    config: ResolvedConfig,
    spec: ScenarioSpec,
    policies: Sequence[str] | None = None,
    seeds: Sequence[int] | None = None,
    outdir: Path | None = None,
) -> ScenarioReport:
    """Run every (policy, seed) pair of a scenario and evaluate expectations."""
    policies = tuple(policies) if policies else spec.policies
    seeds = tuple(seeds) if seeds else spec.seeds
    for policy in policies:
        if policy != CONTROLLER_POLICY and policy not in config.candidates.names():
            raise ConfigError(f"unknown policy {policy!r}")

    controller_cfg = config.controller_config(spec.controller_overrides)
    results: dict[str, list[RunResult]] = {p: [] for p in policies}
    for policy in policies:
        for seed in seeds:
            sim = replace(spec.sim, seed=seed)
            if policy == CONTROLLER_POLICY:
                trace = run_simulation(
                    config.dag,
                    config.fabric,
                    sim,
                    controller_cfg,
                    stresses=spec.stresses,
                    faults=spec.faults,
                    estimator=config.estimator,
                )
            else:
                trace = run_simulation(
                    config.dag,
                    config.fabric,
                    sim,
                    config.candidates.by_name(policy),
                    window_size=controller_cfg.window_size,
                    stresses=spec.stresses,
                    faults=spec.faults,
                    weights=config.weights,
                    targets=config.targets,
                )
            if outdir is not None:
                _write_run(outdir / spec.name / policy / f"seed_{seed}", trace, config, policy)
            results[policy].append(
                RunResult(
                    policy,
                    seed,
                    trace.summary,
                    tuple(w.metrics.violation_rate for w in trace.windows),
                )
            )
    expectations = evaluate_expectations(spec, results)
    return ScenarioReport(spec.name, results, expectations)


def _write_run(rundir: Path, trace: SimTrace, config: ResolvedConfig, policy: str) -> None:
    rundir.mkdir(parents=True, exist_ok=True)
    write_cycles_csv(trace, config.fabric, rundir / "cycles.csv")
    write_windows_csv(trace, rundir / "windows.csv")
    write_summary_json(trace, rundir / "summary.json")
    if policy == CONTROLLER_POLICY:
        write_decisions_jsonl(trace, rundir / "decisions.jsonl")


def evaluate_expectations(
    spec: ScenarioSpec, results: Mapping[str, Sequence[RunResult]]
) -> list[ExpectationResult]:
    out: list[ExpectationResult] = []
    controller_runs = results.get(CONTROLLER_POLICY, ())
    expected = spec.expected

    if controller_runs:
        occupancies = []
        seed_pass = 0
        for run in controller_runs:
            post = post_convergence_windows(run.summary)
            placements = run.window_placements
            if not post:
                occupancies.append(0.0)
                continue
            share = sum(1 for k in post if placements[k - 1] in expected.dominant) / len(post)
            forbidden_share = (
                sum(1 for k in post if placements[k - 1] in expected.forbidden) / len(post)
                if expected.forbidden
                else 0.0
            )
            occupancies.append(share)
            if share >= expected.min_fraction and forbidden_share == 0.0:
                seed_pass += 1
        needed = max(1, math.ceil(len(controller_runs) * expected.min_seed_fraction - 1e-9))
        passed = seed_pass >= needed
        label = "+".join(expected.dominant)
        detail = (
            f"{seed_pass}/{len(controller_runs)} seeds reached {label} occupancy >= "
            f"{expected.min_fraction:.2f} post-convergence (need {needed}; "
            f"min {min(occupancies):.3f}, mean {_mean(occupancies):.3f}"
        )
        if expected.forbidden:
            detail += f"; forbidden {'+'.join(expected.forbidden)} must stay at 0"
        detail += ")"
        out.append(ExpectationResult(f"dominant-placement:{label}", passed, detail))

    for check in spec.checks:
        out.append(_evaluate_check(check, spec, results))
    return out


def _policy_runs(results: Mapping[str, Sequence[RunResult]], policy: str) -> Sequence[RunResult]:
    runs = results.get(policy)
    if not runs:
        raise ConfigError(f"check references policy {policy!r} which did not run")
    return runs


def _windowed_violation(run: RunResult, windows: Sequence[int]) -> float:
    rates = run.window_violations
    chosen = [rates[k - 1] for k in windows if 0 < k <= len(rates)]
    return _mean(chosen)


def _evaluate_check(
    check: Check, spec: ScenarioSpec, results: Mapping[str, Sequence[RunResult]]
) -> ExpectationResult:
    if check.kind == "policy_violation_above":
        runs = _policy_runs(results, check.policy)
        value = _mean([r.summary["violation_rate"] for r in runs])
        passed = value > check.threshold
        return ExpectationResult(
            f"{check.policy}-violation-above-{check.threshold}",
            passed,
            f"{check.policy} mean violation rate {value:.4f} (threshold {check.threshold})",
        )
    if check.kind == "post_convergence_violation_below":
        runs = _policy_runs(results, check.policy or CONTROLLER_POLICY)
        values = [
            _windowed_violation(r, post_convergence_windows(r.summary)) for r in runs
        ]
        value = _mean(values)
        passed = value <= check.threshold
        return ExpectationResult(
            f"{check.policy or CONTROLLER_POLICY}-post-convergence-violation-below-{check.threshold}",
            passed,
            f"post-convergence mean violation rate {value:.4f} "
            f"(threshold {check.threshold}, worst seed {max(values):.4f})",
        )
    if check.kind == "violation_ratio_at_least":
        worse = _policy_runs(results, check.policy)
        better = _policy_runs(results, check.versus)
        windows = fault_windows(spec) if check.interval == "fault" else list(
            range(1, spec.sim.horizon + 1)
        )
        worse_value = _mean([_windowed_violation(r, windows) for r in worse])
        better_value = _mean([_windowed_violation(r, windows) for r in better])
        passed = worse_value >= check.ratio * better_value
        return ExpectationResult(
            f"{check.policy}-violation-{check.ratio}x-{check.versus}",
            passed,
            f"{check.policy} violation {worse_value:.4f} vs {check.versus} "
            f"{better_value:.4f} over the {check.interval} interval (need {check.ratio}x)",
        )
    raise ConfigError(f"unknown check kind {check.kind!r}")


# ---------------------------------------------------------------------------
# reporting


def render_report(reports: Sequence[ScenarioReport], fmt: str = "text") -> str:
    if fmt == "json":
        payload = {
            "passed": all(r.passed for r in reports),
            "scenarios": [r.to_dict() for r in reports],
        }
        return json.dumps(payload, indent=2, sort_keys=True)
    if fmt != "text":
        raise ConfigError(f"unknown report format {fmt!r}")
    if not reports:
        return ""
    lines: list[str] = []
    for report in reports:
        lines.append(f"scenario: {report.scenario}")
        lines.append(
            f"  {'policy':<8} {'mean_vd':>9} {'l95_ms':>9} {'util_r':>7} "
            f"{'util_e':>7} {'migr':>5}"
        )
        for policy, runs in report.results.items():
            lines.append(
                f"  {policy:<8} "
                f"{_mean([r.summary['violation_rate'] for r in runs]):>9.4f} "
                f"{_mean([r.summary['l95_latency_ms'] for r in runs]):>9.3f} "
                f"{_mean([r.summary['mean_util_robot'] for r in runs]):>7.3f} "
                f"{_mean([r.summary['mean_util_edge'] for r in runs]):>7.3f} "
                f"{_mean([r.summary['migrations'] for r in runs]):>5.1f}"
            )
        for expectation in report.expectations:
            status = "PASS" if expectation.passed else "FAIL"
            lines.append(f"  [{status}] {expectation.name}: {expectation.detail}")
        lines.append("")
    overall = "PASS" if all(r.passed for r in reports) else "FAIL"
    lines.append(f"overall: {overall}")
    return "\n".join(lines)


def write_report(reports: Sequence[ScenarioReport], outdir: Path) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    path = outdir / "report.json"
    payload = {
        "passed": all(r.passed for r in reports),
        "scenarios": [r.to_dict() for r in reports],
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def load_report(outdir: Path) -> dict:
    path = Path(outdir) / "report.json"
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"no stored report under {outdir}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"stored report is corrupt: {exc}") from exc


def render_stored_report(payload: Mapping, fmt: str = "text") -> str:
    """Re-render a stored report.json without rerunning anything."""
    if fmt == "json":
        return json.dumps(payload, indent=2, sort_keys=True)
    lines = []
    for scenario in payload.get("scenarios", []):
        lines.append(f"scenario: {scenario['scenario']}")
        for policy, stats in scenario.get("policies", {}).items():
            lines.append(
                f"  {policy:<8} mean_vd {stats['mean_violation_rate']:.4f} "
                f"l95 {stats['mean_l95_ms']:.3f} ms migr {stats['mean_migrations']:.1f}"
            )
        for expectation in scenario.get("expectations", []):
            status = "PASS" if expectation["passed"] else "FAIL"
            lines.append(f"  [{status}] {expectation['name']}: {expectation['detail']}")
        lines.append("")
    lines.append("overall: " + ("PASS" if payload.get("passed") else "FAIL"))
    return "\n".join(lines)
