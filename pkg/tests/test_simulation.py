"""Engine behavior: determinism, stress, faults, and controller wiring."""

import pytest

from conftest import make_dag, make_fabric
from dtpsim.controller import ControllerConfig
from dtpsim.cost import Constraints, Weights
from dtpsim.metrics import NormalizationTargets
from dtpsim.pipeline import canonical_candidates, nominal_latency
from dtpsim.simulation import (
    FaultInjection,
    SimConfig,
    StressProfile,
    run_simulation,
)

FABRIC = make_fabric()


def fixed_run(dag, placement_name, sim, window_size=5, stresses=(), faults=()):
    placement = canonical_candidates(dag).by_name(placement_name)
    return run_simulation(
        dag, FABRIC, sim, placement,
        window_size=window_size, stresses=stresses, faults=faults,
    )


def test_deterministic_limit_matches_nominal_latency():
    dag = make_dag()
    sim = SimConfig(period=50.0, deadline=30.0, horizon=2, seed=1)
    for placement in canonical_candidates(dag):
        trace = fixed_run(dag, placement.name, sim)
        expected = nominal_latency(dag, placement)
        assert trace.cycles, placement.name
        for record in trace.cycles:
            assert record.e2e_latency == expected
            assert record.deadline_met
            assert record.placement == placement.name


def test_horizon_zero_produces_empty_trace():
    trace = fixed_run(make_dag(), "LOC", SimConfig(50.0, 30.0, horizon=0))
    assert trace.cycles == []
    assert trace.windows == []
    assert trace.summary["cycles"] == 0
    assert trace.summary["violation_rate"] == 0.0


def test_same_seed_reproduces_the_trace():
    dag = make_dag(cv=0.3, jitter=0.2)
    sim = SimConfig(40.0, 40.0, horizon=3, seed=77)
    a = fixed_run(dag, "SO", sim)
    b = fixed_run(dag, "SO", sim)
    assert a.cycles == b.cycles
    assert [w.metrics for w in a.windows] == [w.metrics for w in b.windows]
    assert a.summary == b.summary


def test_different_seeds_differ():
    dag = make_dag(cv=0.3)
    a = fixed_run(dag, "SO", SimConfig(40.0, 40.0, horizon=1, seed=1))
    b = fixed_run(dag, "SO", SimConfig(40.0, 40.0, horizon=1, seed=2))
    assert a.cycles != b.cycles


def test_link_fault_override_shifts_latency():
    dag = make_dag()
    fault = FaultInjection(
        links=(("E", "R2"),), mu=25.0, sigma=0.0, loss_probability=0.0,
        start_window=2, end_window=3,
    )
    sim = SimConfig(period=50.0, deadline=30.0, horizon=4, seed=11)
    trace = fixed_run(dag, "SO", sim, faults=(fault,))
    by_window = [trace.cycles[i * 5:(i + 1) * 5] for i in range(4)]
    # 22 ms of service, 1 ms upload, then 25 ms on the faulted return link
    assert all(r.e2e_latency == 48.0 and not r.deadline_met for r in by_window[1])
    assert all(r.e2e_latency == 48.0 for r in by_window[2])
    assert all(r.e2e_latency == 24.0 and r.deadline_met for r in by_window[0])
    assert all(r.e2e_latency == 24.0 for r in by_window[3])
    assert [w.metrics.violation_rate for w in trace.windows] == [0.0, 1.0, 1.0, 0.0]


def test_cycles_outside_fault_window_are_bit_identical():
    dag = make_dag(cv=0.25, jitter=0.1)
    sim = SimConfig(period=50.0, deadline=40.0, horizon=4, seed=23)
    fault = FaultInjection(
        links=(("E", "R2"), ("R1", "E")), mu=25.0, sigma=5.0, loss_probability=0.1,
        start_window=2, end_window=3,
    )
    clean = fixed_run(dag, "SO", sim)
    faulted = fixed_run(dag, "SO", sim, faults=(fault,))
    assert faulted.cycles[0:5] == clean.cycles[0:5]
    assert faulted.cycles[15:20] == clean.cycles[15:20]
    assert faulted.cycles[5:15] != clean.cycles[5:15]


def test_additive_fault_stacks_on_base_delay():
    dag = make_dag()
    fault = FaultInjection(
        links=(("E", "R2"),), mu=25.0, sigma=0.0, loss_probability=0.0,
        start_window=1, end_window=1, additive=True,
    )
    sim = SimConfig(period=50.0, deadline=30.0, horizon=1, seed=3)
    trace = fixed_run(dag, "SO", sim, faults=(fault,))
    assert all(r.e2e_latency == 49.0 for r in trace.cycles)


def test_unresolvable_fault_link_is_rejected():
    dag = make_dag()
    fault = FaultInjection(
        links=(("E", "R9"),), mu=25.0, sigma=0.0, loss_probability=0.0,
        start_window=1, end_window=1,
    )
    with pytest.raises(ValueError, match="R9"):
        fixed_run(dag, "SO", SimConfig(50.0, 30.0, horizon=1), faults=(fault,))


def test_cpu_stress_multiplies_service_times():
    dag = make_dag()
    stress = StressProfile("R1", start_window=1, end_window=2, slowdown=3.0)
    sim = SimConfig(period=50.0, deadline=50.0, horizon=3, seed=5)
    trace = fixed_run(dag, "LOC", sim, stresses=(stress,))
    # T1 and T2 run on R1: (2 + 10) * 3 + 8 + 2 + 1 while stressed
    assert all(r.e2e_latency == 47.0 for r in trace.cycles[:10])
    assert all(r.e2e_latency == 23.0 for r in trace.cycles[10:])


def test_exogenous_load_adds_busy_time_only():
    dag = make_dag()
    sim = SimConfig(period=20.0, deadline=20.0, horizon=1, seed=9)
    stress = StressProfile("R1", 1, 1, slowdown=1.0, exogenous_load=0.5)
    loaded = fixed_run(dag, "LOC", sim, window_size=10, stresses=(stress,))
    baseline = fixed_run(dag, "LOC", sim, window_size=10)
    extra = sum(r.busy_time["R1"] for r in loaded.cycles) - sum(
        r.busy_time["R1"] for r in baseline.cycles
    )
    assert extra == pytest.approx(0.5 * 20.0 * 10)
    assert [r.e2e_latency for r in loaded.cycles] == [r.e2e_latency for r in baseline.cycles]


def test_lost_twice_caps_latency_and_skips_downstream_stages():
    dag = make_dag(loss=0.999999999)
    sim = SimConfig(period=50.0, deadline=30.0, horizon=1, seed=13)
    trace = fixed_run(dag, "LOC", sim)
    for record in trace.cycles:
        assert record.e2e_latency == 50.0
        assert not record.deadline_met
        assert record.busy_time["R1"] == 12.0
        assert record.busy_time["R2"] == 0.0


def test_deadline_above_period_rejected():
    with pytest.raises(ValueError, match="deadline"):
        SimConfig(period=40.0, deadline=50.0, horizon=1)


def test_period_outside_supported_band_warns():
    with pytest.warns(UserWarning, match="period"):
        SimConfig(period=10.0, deadline=10.0, horizon=1)


def test_queueing_configurations_are_rejected():
    dag = make_dag(means=(2.0, 30.0, 8.0, 2.0))
    with pytest.raises(ValueError, match="queue"):
        fixed_run(dag, "LOC", SimConfig(period=25.0, deadline=25.0, horizon=1))


def test_stressed_overload_warns_but_runs():
    dag = make_dag()
    stress = StressProfile("R1", 1, 1, slowdown=4.0)
    with pytest.warns(UserWarning, match="saturate"):
        trace = fixed_run(dag, "LOC", SimConfig(40.0, 40.0, horizon=1, seed=2),
                          stresses=(stress,))
    assert trace.cycles


def controller_policy(dag, window_size=8, n_min=1):
    return ControllerConfig(
        window_size=window_size,
        candidates=canonical_candidates(dag),
        weights=Weights(),
        constraints=Constraints(l95_max=40.0),
        targets=NormalizationTargets(latency=40.0),
        delta_min=0.1,
        n_min=n_min,
        initial_placement="LOC",
    )


def test_migration_applies_at_the_next_window_boundary():
    # The middle hop is the heavy one, so offloading both T2 and T3 beats
    # the half-offload once R1 slows down.
    dag = make_dag(edge_scales=(3.0, 4.0, 0.5))
    stress = StressProfile("R1", start_window=1, end_window=10, slowdown=3.0)
    sim = SimConfig(period=40.0, deadline=40.0, horizon=6, seed=21)
    trace = run_simulation(
        dag, FABRIC, sim, controller_policy(dag), stresses=(stress,),
    )
    migrate_windows = [d.window_index for d in trace.decisions if d.action == "migrate"]
    assert migrate_windows == [2]
    names = [r.placement for r in trace.cycles]
    w = 8
    assert set(names[:2 * w]) == {"LOC"}
    assert set(names[2 * w:]) == {"SO"}
    assert trace.summary["migrations"] == 1
    assert trace.summary["first_migration_window"] == 2
    assert trace.summary["placement_occupancy"] == {"LOC": pytest.approx(2 / 6),
                                                    "SO": pytest.approx(4 / 6)}


def test_fixed_run_summary_reports_single_placement():
    trace = fixed_run(make_dag(), "HYB", SimConfig(50.0, 30.0, horizon=2, seed=4))
    assert trace.summary["policy"] == "fixed"
    assert trace.summary["initial_placement"] == "HYB"
    assert trace.summary["placement_occupancy"] == {"HYB": 1.0}
    assert trace.summary["migrations"] == 0
    assert trace.summary["first_migration_window"] is None
    assert trace.decisions == []
