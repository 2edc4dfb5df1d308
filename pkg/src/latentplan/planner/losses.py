"""Distillation targets and the combined denoising + distillation objective."""

from __future__ import annotations

import numpy as np

from ..diffusion.losses import diffusion_loss
from ..diffusion.schedule import NoiseSchedule, forward_noise
from ..numerics.nn import MLP, Module
from ..numerics.tensor import NumericsError, Tensor, get_default_dtype
from .model import BatchedCondition, Denoiser, PlannerConfig, PlannerError


def half_noise_time(schedule: NoiseSchedule) -> float:
    """The t where signal and noise rates are equal (alpha_t = sigma_t = 1/sqrt(2))."""
    a = 0.25 * (schedule.beta_max - schedule.beta_min)
    b = 0.5 * schedule.beta_min
    c = 0.5 * np.log(2.0)
    return float((-b + np.sqrt(b * b + 4.0 * a * c)) / (2.0 * a))


def batch_initial_states(cond: BatchedCondition) -> np.ndarray:
    """(B, M, 4) current neighbor states from the last history step.

    Padded neighbor slots are zeroed so masked entries can never reach the
    denoiser through the initial-state embedding.
    """
    s = cond.neighbor_history[:, :, -1, 0:4].copy()
    return s * cond.neighbor_mask[:, :, None]


def flatten_pixels(states: np.ndarray) -> np.ndarray:
    """(B, 1+M, 1+T, 4) -> (B, 1+M, (1+T)*4) per-agent trajectory vectors."""
    return states.reshape(states.shape[:2] + (-1,))


def teacher_features(states_norm: np.ndarray, cond: BatchedCondition,
                     teacher: Denoiser, schedule: NoiseSchedule,
                     mode: str = "clean", layer: str = "final",
                     noise: np.ndarray | None = None) -> np.ndarray:
    """Frozen-teacher activations used as the distillation target.

    mode picks the teacher input noise level: clean trajectories at t=0,
    or the half/full-noise ablation variants. Returns a detached array.
    """
    z0 = flatten_pixels(states_norm)
    if mode == "clean":
        t, z_t = 0.0, z0
    else:
        t = half_noise_time(schedule) if mode == "half_noise" else 1.0
        if noise is None:
            raise PlannerError(f"teacher mode {mode!r} requires a noise array")
        z_t = forward_noise(schedule, z0, t, noise)
    out = teacher(z_t, t, cond, s_init=batch_initial_states(cond))
    h = out.hidden_layers[0] if layer == "layer1" else out.hidden_layers[-1]
    y = h.data.copy()
    if not np.all(np.isfinite(y)):
        raise NumericsError("teacher features are not finite")
    return y


class DistillHead(Module):
    """Projection from student features onto the teacher feature space."""

    def __init__(self, d_student: int, hidden: int, d_teacher: int,
                 rng: np.random.Generator):
        self.mlp = MLP([d_student, hidden, d_teacher], rng)

    def __call__(self, h: Tensor) -> Tensor:
        return self.mlp(h)


class PixelHead(Module):
    """Ablation head mapping student features to raw normalized trajectories."""

    def __init__(self, d_student: int, hidden: int, d_pixel: int,
                 rng: np.random.Generator):
        self.mlp = MLP([d_student, hidden, d_pixel], rng)

    def __call__(self, h: Tensor) -> Tensor:
        return self.mlp(h)


def _masked_feature_mean(err: Tensor, agent_mask: np.ndarray, width: int) -> Tensor:
    mask = agent_mask.astype(err.data.dtype)[..., None]
    count = float(agent_mask.sum()) * width
    if count == 0:
        raise PlannerError("no valid agents in batch")
    return (err * mask).sum() / count


def distill_loss(h_k: Tensor, y_star: np.ndarray, head: DistillHead,
                 agent_mask: np.ndarray, objective: str = "mse") -> Tensor:
    """Feature-matching loss between projected student and teacher activations."""
    proj = head(h_k)
    if proj.shape != y_star.shape:
        raise PlannerError(f"projected shape {proj.shape} != target {y_star.shape}")
    if objective == "mse":
        diff = proj - y_star
        return _masked_feature_mean(diff * diff, agent_mask, y_star.shape[-1])
    # cosine: 1 - mean cosine similarity over valid agent rows
    eps = 1e-8
    dot = (proj * y_star).sum(axis=-1)
    pn = (proj * proj).sum(axis=-1).sqrt()
    yn = np.sqrt((y_star * y_star).sum(axis=-1))
    cos = dot / (pn * yn + eps)
    mask = agent_mask.astype(proj.data.dtype)
    count = float(agent_mask.sum())
    if count == 0:
        raise PlannerError("no valid agents in batch")
    return 1.0 - (cos * mask).sum() / count


def pixel_aux_loss(h_k: Tensor, states_norm: np.ndarray, head: PixelHead,
                   agent_mask: np.ndarray) -> Tensor:
    """MSE between a pixel head on student features and the clean trajectory."""
    target = flatten_pixels(states_norm)
    pred = head(h_k)
    if pred.shape != target.shape:
        raise PlannerError(f"pixel head shape {pred.shape} != target {target.shape}")
    diff = pred - target
    return _masked_feature_mean(diff * diff, agent_mask, target.shape[-1])


def total_loss(states_norm: np.ndarray, valid_mask: np.ndarray,
               cond: BatchedCondition, denoiser: Denoiser,
               schedule: NoiseSchedule, cfg: PlannerConfig,
               rng: np.random.Generator,
               vae=None, latent_scale: float = 1.0,
               teacher: Denoiser | None = None,
               distill_head: DistillHead | None = None,
               pixel_head: PixelHead | None = None):
    """One training objective evaluation: L = L_diff + alpha * L_dist.

    The clean target is the scaled reparameterized VAE latent (or the raw
    flattened trajectory for a pixel-space model); t ~ Uniform(0,1) per
    sample. Returns (loss Tensor, components dict).
    """
    dt = get_default_dtype()
    B = states_norm.shape[0]
    agent_mask = valid_mask.any(axis=-1)
    if cfg.pixel_space:
        z0 = flatten_pixels(states_norm).astype(dt)
    else:
        if vae is None:
            raise PlannerError("latent-space training requires the frozen VAE")
        g = vae.encode(states_norm, valid_mask)
        eps_z = rng.standard_normal(g.mu.shape).astype(dt)
        z0 = latent_scale * (g.mu.data + g.sigma.data * eps_z)
    t = rng.uniform(0.0, 1.0, B).astype(dt)
    eps = rng.standard_normal(z0.shape).astype(dt)
    z_t = forward_noise(schedule, z0, t, eps).astype(dt)

    drop = None
    if cfg.route_dropout > 0.0:
        drop = rng.random(B) < cfg.route_dropout
    out = denoiser(z_t, t, cond, s_init=batch_initial_states(cond),
                   drop_route_mask=drop)
    l_diff = diffusion_loss(out.z0_hat, z0, agent_mask)
    comps = {"diff": float(l_diff.item())}
    loss = l_diff

    if cfg.ablation == "pixel":
        if pixel_head is None:
            raise PlannerError("pixel ablation requires a pixel head")
        h_k = out.hidden_layers[cfg.student_layer - 1]
        l_pix = pixel_aux_loss(h_k, states_norm.astype(dt), pixel_head, agent_mask)
        loss = loss + cfg.alpha * l_pix
        comps["pixel"] = float(l_pix.item())
    elif cfg.alpha > 0.0 and teacher is not None:
        if distill_head is None:
            raise PlannerError("distillation requires a projection head")
        t_noise = None
        if cfg.teacher_mode != "clean":
            t_noise = rng.standard_normal(flatten_pixels(states_norm).shape).astype(dt)
        y_star = teacher_features(states_norm.astype(dt), cond, teacher, schedule,
                                  mode=cfg.teacher_mode, layer=cfg.teacher_layer,
                                  noise=t_noise)
        h_k = out.hidden_layers[cfg.student_layer - 1]
        l_dist = distill_loss(h_k, y_star, distill_head, agent_mask,
                              objective=cfg.distill_objective)
        loss = loss + cfg.alpha * l_dist
        comps["dist"] = float(l_dist.item())
    comps["total"] = float(loss.item())
    return loss, comps
