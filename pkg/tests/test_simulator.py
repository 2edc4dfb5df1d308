"""Closed-loop rollout, IDM, scoring, and report writers."""

import csv

import numpy as np
import pytest

from latentplan.scenario import MAP_FAMILIES, ScenarioConfig, SceneLayout, generate_scenario
from latentplan.scenario.generate import ScenarioRecord
from latentplan.scenario.maps import Lane
from latentplan.simulator import (BenchConfig, Event, IdmParams, Rollout,
                                  ScoreWeights, SimConfig, SimulationError,
                                  bench_latency, expert_policy, idm_accel,
                                  run_closed_loop, score, write_bench_csv,
                                  write_rollout_csv, write_score_report)

LAYOUT = SceneLayout(n_neighbors=3, horizon=20, history=6)


def _straight_record(n_steps=60, ego_speed=10.0, dt=0.1):
    """Single straight lane along +x; expert ego drives it at constant speed."""
    lane = Lane(0, np.array([[-20.0, 0.0], [400.0, 0.0]]), speed_limit=10.0,
                width=4.0)
    ego = np.zeros((n_steps, 5))
    ego[:, 0] = np.arange(n_steps) * ego_speed * dt
    ego[:, 3] = 1.0  # cos; heading +x
    ego[:, 4] = ego_speed
    return ScenarioRecord("synthetic", "straight", 0, dt, n_steps * dt, [lane],
                          np.zeros((0, n_steps, 5)), np.zeros((0, 3)),
                          ego, np.array([4.5, 2.0, 0.0]), route_lane_ids=[0])


def _rollout_at_speed(record, speed, start=5):
    ego = record.ego_log.copy()
    n = record.n_steps
    ego[start:, 0] = ego[start, 0] + np.arange(n - start) * speed * record.dt
    ego[start:, 4] = speed
    return Rollout(record.scenario_id, record.map_family, record.dt, start,
                   ego, record.agent_logs, [], True)


# -- scoring oracle ---------------------------------------------------------------

def test_score_weighted_average_hand_case():
    """ttc=1, progress=0.5, speed=1, comfort=1 -> (5 + 2.5 + 4 + 2)/16."""
    record = _straight_record(ego_speed=10.0)
    rollout = _rollout_at_speed(record, 5.0)  # half the expert's progress
    sc = score(rollout, record)
    assert (sc.at_fault_collision, sc.drivable_area) == (1, 1)
    assert sc.ttc == 1.0
    assert sc.progress == pytest.approx(0.5, abs=1e-9)
    assert sc.speed_limit == 1.0
    assert sc.comfort == 1.0
    assert sc.total == pytest.approx(0.84375, abs=1e-9)


def test_score_full_compliance_is_one():
    record = _straight_record()
    sc = score(_rollout_at_speed(record, 10.0), record)
    assert sc.total == pytest.approx(1.0, abs=1e-9)


def test_score_speed_violation_lowers_total():
    record = _straight_record()
    fast = score(_rollout_at_speed(record, 12.0), record)   # limit is 10
    clean = score(_rollout_at_speed(record, 10.0), record)
    assert fast.speed_limit < 1.0
    assert fast.total < clean.total


def test_score_collision_multiplier():
    record = _straight_record()
    rollout = _rollout_at_speed(record, 10.0)
    rollout.events.append(Event(10, "collision", ego_speed=10.0,
                                other_behind=False))
    assert score(rollout, record).total == 0.0
    # struck from behind while (near) stationary: not at fault
    rollout2 = _rollout_at_speed(record, 10.0)
    rollout2.events.append(Event(10, "collision", ego_speed=0.0,
                                 other_behind=True))
    assert score(rollout2, record).at_fault_collision == 1


def test_score_off_drivable_multiplier():
    record = _straight_record()
    rollout = _rollout_at_speed(record, 10.0)
    rollout.events.append(Event(12, "off_drivable"))
    sc = score(rollout, record)
    assert sc.drivable_area == 0 and sc.total == 0.0


def test_score_comfort_penalizes_harsh_braking():
    record = _straight_record()
    rollout = _rollout_at_speed(record, 10.0)
    rollout.ego_states[20:, 4] = 2.0  # instantaneous 8 m/s drop: |a| = 80
    sc = score(rollout, record)
    assert sc.comfort < 1.0


# -- IDM -------------------------------------------------------------------------

def test_idm_free_road_approaches_desired_speed():
    p = IdmParams()
    assert idm_accel(0.0, 0.0, np.inf, p) == pytest.approx(p.a_max)
    assert idm_accel(p.v0, 0.0, np.inf, p) == pytest.approx(0.0)
    assert idm_accel(p.v0 + 2.0, 0.0, np.inf, p) < 0.0


def test_idm_gap_monotone_and_emergency():
    p = IdmParams()
    gaps = [1.0, 3.0, 10.0, 50.0]
    accs = [idm_accel(10.0, 0.0, g, p) for g in gaps]
    assert all(a2 >= a1 for a1, a2 in zip(accs, accs[1:]))
    assert idm_accel(10.0, 0.0, 0.0, p) == -p.b_hard
    assert idm_accel(10.0, 0.0, -1.0, p) == -p.b_hard
    assert all(-p.b_hard <= a <= p.a_max for a in accs)


def test_idm_params_validation():
    with pytest.raises(ValueError):
        IdmParams(v0=0.0).validate()
    with pytest.raises(ValueError):
        IdmParams(delta=0.5).validate()
    IdmParams().validate()


# -- closed loop -------------------------------------------------------------------

def _gen(family, seed=0):
    return generate_scenario(seed, ScenarioConfig(map_family=family,
                                                  n_neighbors=3, duration=8.0))


@pytest.mark.parametrize("family", MAP_FAMILIES)
def test_expert_replay_scores_clean(family):
    record = _gen(family)
    rollout = run_closed_loop(record, expert_policy(record, LAYOUT),
                              SimConfig(layout=LAYOUT))
    assert rollout.completed
    sc = score(rollout, record)
    assert (sc.at_fault_collision, sc.drivable_area) == (1, 1)
    assert sc.progress == pytest.approx(1.0, abs=1e-6)


def test_nonreactive_keeps_logged_agents_bitwise():
    record = _gen("straight", seed=3)
    rollout = run_closed_loop(record, expert_policy(record, LAYOUT),
                              SimConfig(layout=LAYOUT, mode="nonreactive"))
    assert np.array_equal(rollout.agent_states, record.agent_logs)


def test_reactive_rollout_well_formed():
    record = _gen("intersection", seed=1)
    rollout = run_closed_loop(record, expert_policy(record, LAYOUT),
                              SimConfig(layout=LAYOUT, mode="reactive"))
    assert rollout.completed
    assert rollout.agent_states.shape == record.agent_logs.shape
    assert (rollout.agent_states[:, :, 4] >= 0.0).all()
    hd = rollout.agent_states[:, rollout.start_step:, 2:4]
    assert np.abs((hd ** 2).sum(-1) - 1.0).max() < 1e-6


def test_planner_failure_ends_rollout_at_fault():
    record = _gen("straight", seed=4)

    def broken(cond):
        raise RuntimeError("boom")

    rollout = run_closed_loop(record, broken, SimConfig(layout=LAYOUT))
    assert not rollout.completed
    assert any(e.kind == "planner_failure" for e in rollout.events)
    assert score(rollout, record).total == 0.0


def test_bad_plan_shape_is_a_planner_failure():
    record = _gen("straight", seed=5)
    rollout = run_closed_loop(record, lambda c: np.zeros((3, 4)),
                              SimConfig(layout=LAYOUT))
    assert not rollout.completed
    assert any(e.kind == "planner_failure" for e in rollout.events)


def test_ego_speed_continuity_bound():
    record = _gen("straight", seed=6)

    def teleporter(cond):
        states = np.zeros((1 + LAYOUT.n_neighbors, 1 + LAYOUT.horizon, 4))
        states[0, :, 0] = np.arange(1 + LAYOUT.horizon) * 50.0  # 500 m/s
        states[0, :, 3] = 1.0
        return states

    cfg = SimConfig(layout=LAYOUT, v_max=30.0)
    rollout = run_closed_loop(record, teleporter, cfg)
    v = rollout.ego_states[rollout.start_step:, 4]
    assert v.max() <= cfg.v_max + 1e-9


def test_sim_config_validation():
    with pytest.raises(SimulationError):
        SimConfig(mode="magic")
    with pytest.raises(SimulationError):
        SimConfig(replan_interval=0)


def test_replan_interval_matches_call_count():
    record = _gen("straight", seed=7)
    calls = {"n": 0}
    expert = expert_policy(record, LAYOUT)

    def counting(cond):
        calls["n"] += 1
        return expert(cond)

    run_closed_loop(record, counting, SimConfig(layout=LAYOUT, replan_interval=10**9))
    assert calls["n"] == 1


# -- writers & bench ---------------------------------------------------------------

def test_rollout_csv_and_report(tmp_path):
    record = _gen("straight", seed=8)
    rollout = run_closed_loop(record, expert_policy(record, LAYOUT),
                              SimConfig(layout=LAYOUT))
    p = tmp_path / "r.csv"
    write_rollout_csv(p, rollout)
    with open(p) as f:
        rows = list(csv.reader(f))
    n_agents = record.agent_logs.shape[0]
    assert len(rows) == 1 + rollout.n_steps * (1 + n_agents)
    assert rows[0][0] == "t"

    rp = tmp_path / "report.txt"
    write_score_report(rp, {"s0": score(rollout, record)})
    text = rp.read_text()
    assert "[s0]" in text and "total=" in text and "[aggregate]" in text


def test_bench_latency_counts_and_csv(tmp_path):
    calls = {"n": 0}

    def fn(cond):
        calls["n"] += 1

    out = bench_latency(fn, ["c"], BenchConfig(warmup=3, repeats=7), nfe=4)
    assert calls["n"] == 10
    assert out["calls"] == 7 and out["nfe"] == 4
    assert out["p50_ms"] <= out["p99_ms"]
    p = tmp_path / "bench.csv"
    write_bench_csv(p, [dict(out, config="o1s1")])
    rows = list(csv.reader(open(p)))
    assert len(rows) == 2 and rows[1][0] == "o1s1"
    with pytest.raises(ValueError):
        bench_latency(fn, [], BenchConfig())
