"""Synthetic scenario generation, feature extraction, and normalization."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentplan.scenario import (MAP_FAMILIES, NormStats, ScenarioConfig,
                                 SceneLayout, build_training_sample,
                                 compute_norm_stats, denormalize,
                                 generate_scenario, normalize, read_dataset,
                                 write_dataset)
from latentplan.scenario.features import HorizonError, build_condition
from latentplan.scenario.generate import footprint_circles
from latentplan.scenario.maps import Path

LAYOUT = SceneLayout(n_neighbors=3, horizon=40, history=11)
CFG = ScenarioConfig(n_neighbors=3, duration=8.0)


def _record(seed=0, family="straight"):
    return generate_scenario(seed, ScenarioConfig(map_family=family,
                                                  n_neighbors=3, duration=8.0))


# -- generation --------------------------------------------------------------

@pytest.mark.parametrize("family", sorted(MAP_FAMILIES))
def test_generation_deterministic_and_well_formed(family):
    a = _record(3, family)
    b = _record(3, family)
    assert a.scenario_id == b.scenario_id
    assert np.array_equal(a.ego_log, b.ego_log)
    assert np.array_equal(a.agent_logs, b.agent_logs)
    # unit-circle heading and non-negative speeds throughout the logs
    for log in (a.ego_log, *(a.agent_logs if len(a.agent_logs) else [])):
        assert np.allclose(np.hypot(log[..., 2], log[..., 3]), 1.0, atol=1e-6)
        assert (log[..., 4] >= -1e-9).all()
    assert a.n_steps == int(round(8.0 / a.dt)) + 1


@pytest.mark.parametrize("family", sorted(MAP_FAMILIES))
def test_generated_scenarios_collision_free(family):
    rec = _record(11, family)
    logs = np.concatenate([rec.ego_log[None], rec.agent_logs], axis=0)
    dims = np.concatenate([rec.ego_dims[None], rec.agent_dims], axis=0)
    n = logs.shape[0]
    for t in range(0, rec.n_steps, 5):
        circles = [footprint_circles(logs[i, t], dims[i]) for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                ci, ri = circles[i]
                cj, rj = circles[j]
                d = np.linalg.norm(ci[:, None] - cj[None], axis=-1)
                assert d.min() > ri + rj, (family, t, i, j)


def test_unknown_family_rejected():
    from latentplan.scenario import ScenarioError
    with pytest.raises(ScenarioError):
        generate_scenario(0, ScenarioConfig(map_family="roundabout"))


# -- feature extraction ------------------------------------------------------

def test_training_sample_ego_frame_anchor():
    rec = _record(5)
    traj, cond = build_training_sample(rec, 12, LAYOUT)
    assert traj.states.shape == (4, LAYOUT.horizon + 1, 4)
    # the ego state at the anchor step maps to the frame origin
    assert np.allclose(traj.states[0, 0], [0.0, 0.0, 0.0, 1.0], atol=1e-9)
    assert traj.valid_mask[0].all()
    # neighbor history current step consistent with trajectory start
    for m in range(LAYOUT.n_neighbors):
        if cond.neighbor_mask[m]:
            assert np.allclose(cond.neighbor_history[m, -1, :4],
                               traj.states[1 + m, 0], atol=1e-9)


def test_training_sample_padding_masked_and_zero():
    rec = generate_scenario(2, ScenarioConfig(n_neighbors=1, duration=8.0))
    layout = SceneLayout(n_neighbors=5, horizon=40, history=11)
    traj, cond = build_training_sample(rec, 12, layout)
    pad = ~np.concatenate([[True], cond.neighbor_mask]).astype(bool)
    assert np.all(traj.states[pad[:, None] & np.ones_like(traj.valid_mask, bool)] == 0)
    assert np.all(traj.valid_mask[pad] == 0)
    assert np.all(cond.neighbor_history[~cond.neighbor_mask.astype(bool)] == 0)


def test_horizon_bounds_checked():
    rec = _record(1)
    with pytest.raises(HorizonError):
        build_training_sample(rec, 5, LAYOUT)       # not enough history
    with pytest.raises(HorizonError):
        build_training_sample(rec, 10_000, LAYOUT)  # not enough future


def test_build_condition_reads_only_past():
    """Truncating the logs after t0 must not change the condition."""
    rec = _record(9)
    t0 = 12
    full = build_condition(rec.ego_log, rec.agent_logs, rec.agent_dims,
                           rec.lanes, rec.graph(), rec.route_lane_ids, t0, LAYOUT)
    cut = build_condition(rec.ego_log[:t0 + 1], rec.agent_logs[:, :t0 + 1],
                          rec.agent_dims, rec.lanes, rec.graph(),
                          rec.route_lane_ids, t0, LAYOUT)
    assert np.array_equal(full.neighbor_history, cut.neighbor_history)
    assert np.array_equal(full.lanes, cut.lanes)
    assert np.array_equal(full.route, cut.route)


# -- normalization -----------------------------------------------------------

def test_normalize_roundtrip_and_masked_zeros():
    rec = _record(4)
    traj, _ = build_training_sample(rec, 12, LAYOUT)
    stats = compute_norm_stats([traj])
    normed = normalize(traj, stats)
    # masked rows stay exactly zero on both sides
    assert np.all(normed.states[~normed.valid_mask.astype(bool)] == 0)
    back = denormalize(normed, stats)
    assert np.allclose(back.states[traj.valid_mask.astype(bool)],
                       traj.states[traj.valid_mask.astype(bool)], atol=1e-9)


def test_norm_stats_sin_cos_passthrough():
    rec = _record(4)
    traj, _ = build_training_sample(rec, 12, LAYOUT)
    stats = compute_norm_stats([traj])
    assert stats.mean[2] == stats.mean[3] == 0.0
    assert stats.std[2] == stats.std[3] == 1.0


def test_norm_stats_file_roundtrip(tmp_path):
    stats = NormStats(np.array([1.5, -2.0, 0.0, 0.0]),
                      np.array([3.0, 4.0, 1.0, 1.0]), latent_scale=7.25)
    path = tmp_path / "norm_stats.txt"
    stats.save(path)
    loaded = NormStats.load(path)
    assert np.array_equal(loaded.mean, stats.mean)
    assert np.array_equal(loaded.std, stats.std)
    assert loaded.latent_scale == stats.latent_scale


# -- map paths ---------------------------------------------------------------

@given(st.floats(0.0, 1.0), st.integers(0, 2**31 - 1))
@settings(max_examples=30, deadline=None)
def test_path_project_inverts_position(frac, seed):
    rng = np.random.default_rng(seed)
    pts = np.cumsum(rng.uniform(0.2, 2.0, size=(20, 2)), axis=0)
    path = Path(pts)
    s = frac * path.length
    p = path.position(s)
    s_back, lateral = path.project(p)
    assert abs(lateral) < 1e-9
    assert np.allclose(path.position(s_back), p, atol=1e-9)


def test_path_handles_duplicate_points():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    path = Path(pts)
    assert np.allclose(path.length, 2.0)
    # heading is (sin, cos): the +x direction is (0, 1)
    assert np.allclose(path.heading(0.5), [[0.0, 1.0]])


def test_path_project_lateral_sign_magnitude():
    path = Path(np.array([[0.0, 0.0], [10.0, 0.0]]))
    s, lat = path.project(np.array([4.0, 3.0]))
    assert np.allclose(s, 4.0) and np.allclose(abs(lat), 3.0)


# -- record dataset container -------------------------------------------------

def test_record_dataset_roundtrip(tmp_path):
    recs = [_record(i, fam) for i, fam in enumerate(sorted(MAP_FAMILIES))]
    path = tmp_path / "records.bin"
    write_dataset(recs, path)
    loaded = read_dataset(path)
    assert len(loaded) == len(recs)
    for a, b in zip(recs, loaded):
        assert a.scenario_id == b.scenario_id
        assert np.array_equal(a.ego_log, b.ego_log)
        assert np.array_equal(a.agent_logs, b.agent_logs)
        assert a.route_lane_ids == b.route_lane_ids
