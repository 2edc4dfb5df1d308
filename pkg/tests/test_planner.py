"""Conditional denoiser, distillation losses, training loop, and plan()."""

import numpy as np
import pytest

from latentplan.diffusion import NoiseSchedule, SamplerConfig, alpha_sigma
from latentplan.numerics import Tensor, grad_check, make_rng, set_default_dtype
from latentplan.planner import (Denoiser, DistillHead, PixelHead, PlannerConfig,
                                PlannerError, PlannerTrainConfig,
                                batch_initial_states, distill_loss,
                                drop_route_mask, flatten_pixels, freeze,
                                half_noise_time, plan, stack_conditions,
                                state_checksum, teacher_features, total_loss,
                                train_planner)
from latentplan.scenario import (ScenarioConfig, SceneLayout,
                                 build_training_sample, compute_norm_stats,
                                 generate_scenario)
from latentplan.trajvae import TrajectoryVae, VaeConfig

from conftest import randomize_zero_init

LAYOUT = SceneLayout(n_neighbors=2, horizon=20, history=6)
PCFG = PlannerConfig(hidden=16, blocks=2, heads=2, latent_dim=4, alpha=0.5,
                     student_layer=2, route_dropout=0.1, mixer_depth=1,
                     fusion_depth=1, ff_mult=2)
SCHED = NoiseSchedule()


@pytest.fixture(scope="module")
def samples():
    out = []
    for s in range(8):
        rec = generate_scenario(s, ScenarioConfig(n_neighbors=2, duration=5.0))
        out.append(build_training_sample(rec, 6, LAYOUT))
    return out


@pytest.fixture(scope="module")
def stats(samples):
    st = compute_norm_stats([t for t, _ in samples])
    st.latent_scale = 1.3
    return st


@pytest.fixture(scope="module")
def vae(samples):
    rng = make_rng(0, stream=1)
    cfg = VaeConfig(hidden=16, blocks=1, heads=2, latent_dim=4,
                    enc_queries=2, dec_cond=2)
    return TrajectoryVae(cfg, 1 + LAYOUT.n_neighbors, 1 + LAYOUT.horizon, rng)


def _denoiser(rng_seed=0, cfg=PCFG, d_in=4):
    return Denoiser(cfg, LAYOUT, d_in, make_rng(rng_seed, stream=11))


def test_half_noise_time_balances_rates():
    t = half_noise_time(SCHED)
    a, s = alpha_sigma(SCHED, t)
    assert abs(a - s) < 1e-9
    assert abs(a - 1.0 / np.sqrt(2.0)) < 1e-9


def test_flatten_and_initial_states(samples):
    cond = stack_conditions([c for _, c in samples[:3]])
    s_init = batch_initial_states(cond)
    assert s_init.shape == (3, LAYOUT.n_neighbors, 4)
    expect = cond.neighbor_history[0, :, -1, :4] * cond.neighbor_mask[0, :, None]
    assert np.array_equal(s_init[0], expect)
    x = np.arange(2 * 3 * 5 * 4, dtype=float).reshape(2, 3, 5, 4)
    assert flatten_pixels(x).shape == (2, 3, 20)
    assert np.array_equal(flatten_pixels(x)[0, 0], x[0, 0].ravel())


def test_config_validation():
    with pytest.raises(PlannerError):
        PlannerConfig(alpha=-0.1)
    with pytest.raises(PlannerError):
        PlannerConfig(route_dropout=1.0)
    with pytest.raises(PlannerError):
        PlannerConfig(blocks=2, student_layer=3)
    with pytest.raises(PlannerError):
        PlannerConfig(distill_objective="l1")
    with pytest.raises(PlannerError):
        PlannerConfig(teacher_mode="noisy")


def test_drop_route_mask_properties():
    rng = make_rng(0, stream=99)
    assert not drop_route_mask(16, 0.0, rng).any()
    m = drop_route_mask(10_000, 0.3, rng)
    assert m.dtype == bool and abs(m.mean() - 0.3) < 0.03
    with pytest.raises(PlannerError):
        drop_route_mask(4, 1.0, rng)


def test_ego_initial_state_row_is_zero(samples):
    den = _denoiser()
    cond = stack_conditions([c for _, c in samples[:2]])
    emb = den.initial_state_embedding(batch_initial_states(cond))
    assert emb.shape == (2, 1 + LAYOUT.n_neighbors, 16)
    assert np.all(emb.data[:, 0] == 0.0)
    assert np.any(emb.data[:, 1:] != 0.0)


def test_denoiser_masked_inputs_cannot_leak(samples):
    """Poisoning padded neighbor / lane rows leaves the output bit-identical."""
    den = _denoiser()
    randomize_zero_init(den.named_parameters(), np.random.default_rng(0))
    _, cond = samples[0]
    cond = cond.copy()
    # free a slot to poison
    cond.neighbor_mask[-1] = False
    cond.lane_mask[-1] = False
    batch = stack_conditions([cond])
    rng = np.random.default_rng(1)
    z_t = rng.standard_normal((1, 1 + LAYOUT.n_neighbors, 4))
    ref = den(z_t, 0.5, batch, s_init=batch_initial_states(batch)).z0_hat.data

    poisoned = cond.copy()
    poisoned.neighbor_history[-1] = 1e6
    poisoned.lanes[-1] = -1e6
    batch2 = stack_conditions([poisoned])
    out = den(z_t, 0.5, batch2, s_init=batch_initial_states(batch2)).z0_hat.data
    assert np.array_equal(ref, out)


def test_denoiser_route_dropout_uses_null_embedding(samples):
    den = _denoiser()
    randomize_zero_init(den.named_parameters(), np.random.default_rng(0))
    _, cond = samples[0]
    a = cond.copy()
    b = cond.copy()
    b.route = b.route + 3.0  # different routes
    batch_a, batch_b = stack_conditions([a]), stack_conditions([b])
    z_t = np.zeros((1, 1 + LAYOUT.n_neighbors, 4))
    drop = np.array([True])
    out_a = den(z_t, 0.5, batch_a, drop_route_mask=drop).z0_hat.data
    out_b = den(z_t, 0.5, batch_b, drop_route_mask=drop).z0_hat.data
    assert np.array_equal(out_a, out_b)        # route content is fully masked
    keep = np.array([False])
    out_c = den(z_t, 0.5, batch_a, drop_route_mask=keep).z0_hat.data
    out_d = den(z_t, 0.5, batch_b, drop_route_mask=keep).z0_hat.data
    assert not np.array_equal(out_c, out_d)    # and used when kept


def test_denoiser_rejects_wrong_latent_dim(samples):
    den = _denoiser()
    batch = stack_conditions([samples[0][1]])
    with pytest.raises(PlannerError):
        den(np.zeros((1, 1 + LAYOUT.n_neighbors, 7)), 0.5, batch)


def test_teacher_features_detached_and_mode_checks(samples, f64):
    d_pixel = (1 + LAYOUT.horizon) * 4
    teacher = _denoiser(cfg=PlannerConfig(hidden=16, blocks=2, heads=2,
                                          latent_dim=4, pixel_space=True,
                                          alpha=0.0, student_layer=1,
                                          mixer_depth=1,
                                          fusion_depth=1, ff_mult=2),
                        d_in=d_pixel)
    batch = stack_conditions([samples[0][1]])
    states = np.zeros((1, 1 + LAYOUT.n_neighbors, 1 + LAYOUT.horizon, 4))
    y = teacher_features(states, batch, teacher, SCHED, mode="clean")
    assert isinstance(y, np.ndarray) and y.shape == (1, 1 + LAYOUT.n_neighbors, 16)
    with pytest.raises(PlannerError):
        teacher_features(states, batch, teacher, SCHED, mode="half_noise")


def test_distill_loss_recomposition(f64):
    rng = make_rng(0, stream=2)
    head = DistillHead(6, 8, 5, rng)
    randomize_zero_init(head.named_parameters(), np.random.default_rng(0))
    h = Tensor(np.random.default_rng(1).normal(size=(2, 3, 6)))
    y = np.random.default_rng(2).normal(size=(2, 3, 5))
    mask = np.array([[1, 1, 0], [1, 0, 0]], dtype=bool)
    loss = distill_loss(h, y, head, mask, objective="mse")
    proj = head(h).data
    manual = (((proj - y) ** 2) * mask[..., None]).sum() / (mask.sum() * 5)
    assert np.isclose(loss.item(), manual)
    cos = distill_loss(h, y, head, mask, objective="cosine")
    assert 0.0 <= cos.item() <= 2.0


def test_total_loss_components_add_up(samples, stats, vae, f64):
    batch = stack_conditions([c for _, c in samples[:4]])
    from latentplan.scenario import normalize
    states = np.stack([normalize(t, stats).states for t, _ in samples[:4]])
    masks = np.stack([t.valid_mask for t, _ in samples[:4]])
    den = _denoiser()
    head = DistillHead(16, 16, 16, make_rng(0, stream=3))
    d_pixel = (1 + LAYOUT.horizon) * 4
    teacher = _denoiser(cfg=PlannerConfig(hidden=16, blocks=2, heads=2,
                                          latent_dim=4, pixel_space=True,
                                          alpha=0.0, student_layer=1,
                                          mixer_depth=1,
                                          fusion_depth=1, ff_mult=2),
                        d_in=d_pixel, rng_seed=7)
    loss, comps = total_loss(states, masks, batch, den, SCHED, PCFG,
                             make_rng(0, stream=12), vae=vae,
                             latent_scale=stats.latent_scale, teacher=teacher,
                             distill_head=head)
    assert set(comps) == {"diff", "dist", "total"}
    assert np.isclose(comps["total"], comps["diff"] + PCFG.alpha * comps["dist"])
    assert np.isclose(loss.item(), comps["total"])


def test_total_loss_gradcheck_small(samples, stats, vae, f64):
    """Full combined objective passes a finite-difference check on every head."""
    batch = stack_conditions([samples[0][1]])
    from latentplan.scenario import normalize
    states = np.stack([normalize(samples[0][0], stats).states])
    masks = np.stack([samples[0][0].valid_mask])
    cfg = PlannerConfig(hidden=8, blocks=1, heads=2, latent_dim=4, alpha=0.5,
                        student_layer=1, route_dropout=0.0, mixer_depth=1,
                        fusion_depth=1, ff_mult=2)
    den = Denoiser(cfg, LAYOUT, 4, make_rng(3, stream=11))
    randomize_zero_init(den.named_parameters(), np.random.default_rng(3))
    head = DistillHead(8, 8, 8, make_rng(4, stream=3))
    teacher = Denoiser(
        PlannerConfig(hidden=8, blocks=1, heads=2, latent_dim=4,
                      pixel_space=True, alpha=0.0, student_layer=1,
                      mixer_depth=1, fusion_depth=1, ff_mult=2),
        LAYOUT, (1 + LAYOUT.horizon) * 4, make_rng(5, stream=11))
    freeze(teacher)

    def loss_fn():
        loss, _ = total_loss(states, masks, batch, den, SCHED, cfg,
                             make_rng(6, stream=12), vae=vae,
                             latent_scale=stats.latent_scale, teacher=teacher,
                             distill_head=head)
        return loss

    params = dict(list(den.named_parameters().items())[:4]
                  + list(head.named_parameters().items())[:2])
    err = grad_check(loss_fn, params)
    assert err < 1e-4, err


def test_train_planner_deterministic_and_frozen_teacher(samples, stats, vae):
    d_pixel = (1 + LAYOUT.horizon) * 4
    set_default_dtype("float32")
    teacher = _denoiser(cfg=PlannerConfig(hidden=16, blocks=2, heads=2,
                                          latent_dim=4, pixel_space=True,
                                          alpha=0.0, student_layer=1,
                                          mixer_depth=1,
                                          fusion_depth=1, ff_mult=2),
                        d_in=d_pixel, rng_seed=9)
    tcfg = PlannerTrainConfig(epochs=2, batch_size=4, lr=1e-3, warmup_epochs=1)
    before = state_checksum(teacher)
    b1, r1 = train_planner(samples, stats, PCFG, tcfg, LAYOUT, seed=0,
                           vae=vae, teacher=teacher)
    b2, r2 = train_planner(samples, stats, PCFG, tcfg, LAYOUT, seed=0,
                           vae=vae, teacher=teacher)
    assert state_checksum(teacher) == before
    s1, s2 = b1.state(), b2.state()
    assert s1.keys() == s2.keys()
    assert all(np.array_equal(s1[k], s2[k]) for k in s1)
    assert r1 == r2
    assert all(not p.requires_grad for p in vae.named_tensors().values())


def test_train_planner_empty_raises(stats, vae):
    with pytest.raises(PlannerError):
        train_planner([], stats, PCFG, PlannerTrainConfig(epochs=1), LAYOUT,
                      seed=0, vae=vae)


def test_plan_shapes_and_determinism(samples, stats, vae):
    den = _denoiser()
    cond = samples[0][1]
    cfg = SamplerConfig(order=1, steps=2, guidance=1.0)
    out1 = plan(cond, den, vae, stats, cfg, make_rng(0, stream=40), n_modes=3)
    out2, lat = plan(cond, den, vae, stats, cfg, make_rng(0, stream=40),
                     n_modes=3, return_latents=True)
    assert len(out1) == 3
    assert out1[0].states.shape == (1 + LAYOUT.n_neighbors, 1 + LAYOUT.horizon, 4)
    assert lat.shape == (3, 1 + LAYOUT.n_neighbors, 4)
    assert all(np.array_equal(a.states, b.states) for a, b in zip(out1, out2))
    with pytest.raises(PlannerError):
        plan(cond, den, vae, stats, cfg, make_rng(0, stream=40), n_modes=0)
