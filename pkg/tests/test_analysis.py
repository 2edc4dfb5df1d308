"""Mode matching, displacement metrics, latent interpolation, and k-means."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from latentplan.analysis import (AnalysisError, ade, apd, fpd,
                                 few_step_fidelity, hungarian_match,
                                 interpolate_latents, kmeans_latents,
                                 read_metrics_csv, write_metrics_csv)
from latentplan.numerics import make_rng
from latentplan.scenario import SceneLayout
from latentplan.trajvae import TrajectoryVae, VaeConfig

floats = st.floats(-100.0, 100.0, allow_nan=False)


def _brute_force_match(z_a, z_b):
    B = z_a.shape[0]
    cost = np.linalg.norm(z_a[:, None] - z_b[None, :], axis=-1)
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(B)):
        c = sum(cost[i, perm[i]] for i in range(B))
        if c < best:
            best, best_perm = c, perm
    return np.array(best_perm), best


@pytest.mark.parametrize("B", [2, 3, 4, 5, 6])
def test_hungarian_equals_exhaustive(B):
    for seed in range(25):
        rng = np.random.default_rng(1000 * B + seed)
        z_a = rng.normal(size=(B, 8))
        z_b = rng.normal(size=(B, 8))
        m = hungarian_match(z_a, z_b)
        perm, cost = _brute_force_match(z_a, z_b)
        assert m.cost == pytest.approx(cost, abs=1e-9)
        assert np.array_equal(m.permutation, perm) or m.cost == pytest.approx(
            cost, abs=1e-12)  # ties may pick a different optimal permutation


def test_hungarian_identity_on_equal_sets():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(5, 4))
    m = hungarian_match(z, z)
    assert np.array_equal(m.permutation, np.arange(5))
    assert m.cost == pytest.approx(0.0, abs=1e-12)


# -- displacement metrics -----------------------------------------------------------

def _traj(rng, K, T):
    return rng.normal(size=(K, T, 4))


def test_ade_matches_loop():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(12, 4))
    b = rng.normal(size=(12, 4))
    manual = np.mean([np.linalg.norm(a[t, :2] - b[t, :2]) for t in range(12)])
    assert ade(a, b) == pytest.approx(manual)


def test_ade_length_mismatch():
    with pytest.raises(AnalysisError):
        ade(np.zeros((5, 4)), np.zeros((6, 4)))


@given(arrays(np.float64, (7, 4), elements=floats),
       arrays(np.float64, (7, 4), elements=floats),
       arrays(np.float64, (7, 4), elements=floats))
@settings(max_examples=50, deadline=None)
def test_ade_metric_properties(a, b, c):
    assert ade(a, b) >= 0.0
    assert ade(a, a) == 0.0
    assert ade(a, b) == pytest.approx(ade(b, a))
    assert ade(a, c) <= ade(a, b) + ade(b, c) + 1e-9


def test_apd_fpd_match_pairwise_loops():
    rng = np.random.default_rng(2)
    x = _traj(rng, 5, 9)
    K = 5
    pairs = [(i, j) for i in range(K) for j in range(i + 1, K)]
    apd_manual = np.mean([
        np.mean(np.linalg.norm(x[i, :, :2] - x[j, :, :2], axis=-1))
        for i, j in pairs])
    fpd_manual = np.mean([
        np.linalg.norm(x[i, -1, :2] - x[j, -1, :2]) for i, j in pairs])
    assert apd(x) == pytest.approx(apd_manual, abs=1e-12)
    assert fpd(x) == pytest.approx(fpd_manual, abs=1e-12)


def test_apd_needs_two_modes():
    with pytest.raises(AnalysisError):
        apd(np.zeros((1, 5, 4)))
    assert apd(np.zeros((3, 5, 4))) == 0.0


# -- few-step fidelity ----------------------------------------------------------------

def test_few_step_fidelity_zero_on_identical():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(4, 6))
    x = rng.normal(size=(4, 12, 4))
    l_z, l_x = few_step_fidelity(z, z, x, x, t_eval=10)
    assert l_z == 0.0 and l_x == 0.0


def test_few_step_fidelity_known_offset():
    rng = np.random.default_rng(4)
    z_ref = rng.normal(size=(3, 6))
    x_ref = rng.normal(size=(3, 12, 4))
    z_s = z_ref + 0.3
    x_s = x_ref.copy()
    x_s[:, :, 0] += 0.4  # constant x offset
    l_z, l_x = few_step_fidelity(z_s, z_ref, x_s, x_ref, per_dimension=True)
    assert l_z == pytest.approx(0.3, abs=1e-12)
    assert l_x == pytest.approx(0.4, abs=1e-12)
    l_z_raw, _ = few_step_fidelity(z_s, z_ref, x_s, x_ref, per_dimension=False)
    assert l_z_raw == pytest.approx(0.3 * 6, abs=1e-12)


def test_few_step_fidelity_matches_on_latents_not_order():
    """Shuffled modes are re-aligned by the latent matching before comparison."""
    rng = np.random.default_rng(5)
    z_ref = rng.normal(size=(4, 6))
    x_ref = rng.normal(size=(4, 12, 4))
    perm = np.array([2, 0, 3, 1])
    l_z, l_x = few_step_fidelity(z_ref[perm], z_ref, x_ref[perm], x_ref)
    assert l_z == pytest.approx(0.0, abs=1e-12)
    assert l_x == pytest.approx(0.0, abs=1e-12)


def test_few_step_fidelity_requires_window():
    rng = np.random.default_rng(6)
    z = rng.normal(size=(2, 4))
    with pytest.raises(AnalysisError):
        few_step_fidelity(z, z, rng.normal(size=(2, 5, 4)),
                          rng.normal(size=(2, 5, 4)), t_eval=10)


# -- k-means ---------------------------------------------------------------------------

def test_kmeans_recovers_separated_blobs():
    rng = np.random.default_rng(7)
    centers = np.array([[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]])
    pts = np.concatenate([c + 0.1 * rng.normal(size=(40, 2)) for c in centers])
    res = kmeans_latents(pts, k=3, seed=0)
    # every blob maps to exactly one cluster
    labels = res.assignments.reshape(3, 40)
    assert all(len(set(row)) == 1 for row in labels.tolist())
    assert len({row[0] for row in labels.tolist()}) == 3
    found = np.sort(res.centers, axis=0)
    assert np.allclose(found, np.sort(centers, axis=0), atol=0.1)


def test_kmeans_k1_center_is_mean():
    rng = np.random.default_rng(8)
    pts = rng.normal(size=(30, 5))
    res = kmeans_latents(pts, k=1, seed=0)
    assert np.allclose(res.centers[0], pts.mean(axis=0), atol=1e-9)


def test_kmeans_inertia_not_increasing_in_k():
    rng = np.random.default_rng(9)
    pts = rng.normal(size=(80, 3))
    inertias = [kmeans_latents(pts, k=k, seed=0).inertia for k in (1, 2, 4, 8)]
    assert all(b <= a + 1e-9 for a, b in zip(inertias, inertias[1:]))


def test_kmeans_deterministic_per_seed():
    rng = np.random.default_rng(10)
    pts = rng.normal(size=(60, 4))
    r1 = kmeans_latents(pts, k=4, seed=3)
    r2 = kmeans_latents(pts, k=4, seed=3)
    assert np.array_equal(r1.centers, r2.centers)
    assert np.array_equal(r1.assignments, r2.assignments)


def test_kmeans_inertia_matches_assignments():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(50, 3))
    res = kmeans_latents(pts, k=5, seed=1)
    manual = sum(np.sum((pts[i] - res.centers[res.assignments[i]]) ** 2)
                 for i in range(50))
    assert res.inertia == pytest.approx(manual, rel=1e-9)


# -- latent interpolation -----------------------------------------------------------

LAYOUT = SceneLayout(n_neighbors=2, horizon=20, history=6)


@pytest.fixture(scope="module")
def vae():
    cfg = VaeConfig(hidden=16, blocks=1, heads=2, latent_dim=4,
                    enc_queries=2, dec_cond=2)
    return TrajectoryVae(cfg, 1 + LAYOUT.n_neighbors, 1 + LAYOUT.horizon,
                         make_rng(0, stream=1))


def test_interpolation_endpoints_and_midpoint(vae):
    rng = np.random.default_rng(12)
    z_a = rng.normal(size=4)
    z_b = rng.normal(size=4)
    codes, trajs = interpolate_latents(z_a, z_b, 5, vae)
    assert codes.shape[0] == 5 and trajs.shape[0] == 5
    assert np.allclose(codes[0], z_a) and np.allclose(codes[-1], z_b)
    assert np.allclose(codes[2], 0.5 * (z_a + z_b))
    with pytest.raises(AnalysisError):
        interpolate_latents(z_a, z_b, 1, vae)


# -- metrics csv -----------------------------------------------------------------------

def test_metrics_csv_roundtrip(tmp_path):
    rows = [("s0", "ade_expert", 1.25), ("s0", "apd", 0.5),
            ("aggregate", "apd", 0.5)]
    p = tmp_path / "metrics.csv"
    write_metrics_csv(p, rows)
    back = read_metrics_csv(p)
    assert [(a, b, pytest.approx(c)) for a, b, c in back] == rows
