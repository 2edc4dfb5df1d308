"""End-to-end planning: prior sampling, guided denoising, decoding to world units."""

from __future__ import annotations

import numpy as np

from ..diffusion.sampler import (NfeCounter, SamplerConfig, dpm_solve,
                                 guided_denoiser, sample_prior)
from ..diffusion.schedule import NoiseSchedule
from ..scenario.features import SceneCondition, TrajectoryTensor
from ..scenario.normalize import NormStats, denormalize_array
from .losses import batch_initial_states
from .model import Denoiser, PlannerError, stack_conditions


def plan(cond: SceneCondition, denoiser: Denoiser, vae, stats: NormStats,
         sampler_cfg: SamplerConfig, rng: np.random.Generator,
         n_modes: int = 3, schedule: NoiseSchedule | None = None,
         counter: NfeCounter | None = None,
         return_latents: bool = False) -> list[TrajectoryTensor]:
    """Sample n_modes candidate futures for one scene.

    Row 0 of each returned trajectory is the ego plan, rows 1..M the joint
    neighbor predictions, all in the ego frame of the current state. With
    return_latents the (n_modes, 1+M, L) unscaled latent codes come back too.
    """
    if n_modes < 1:
        raise PlannerError(f"n_modes must be >= 1, got {n_modes}")
    if schedule is None:
        schedule = NoiseSchedule()
    if stats.latent_scale <= 0:
        raise PlannerError(f"latent scale must be positive, got {stats.latent_scale}")

    try:
        batch = stack_conditions([cond] * n_modes)
        s_init = batch_initial_states(batch)
        features = denoiser.scene(batch)
    except Exception as e:
        raise PlannerError(f"scene encoding failed: {e}") from e

    def cond_fn(z, t):
        return denoiser(z, t, batch, s_init=s_init, features=features).z0_hat.data

    all_drop = np.ones(n_modes, dtype=bool)

    def uncond_fn(z, t):
        return denoiser(z, t, batch, s_init=s_init, drop_route_mask=all_drop,
                        features=features).z0_hat.data

    guided = guided_denoiser(cond_fn, uncond_fn, sampler_cfg.guidance, counter)

    try:
        n_agents = s_init.shape[1] + 1
        z1 = sample_prior(rng, (n_modes, n_agents, denoiser.d_in),
                          sampler_cfg.temperature)
        z0 = dpm_solve(schedule, guided, z1, sampler_cfg, counter)
    except Exception as e:
        raise PlannerError(f"latent sampling failed: {e}") from e

    try:
        latents = z0 / stats.latent_scale
        states_norm = vae.decode(latents).data
        states = denormalize_array(states_norm, stats)
    except Exception as e:
        raise PlannerError(f"decoding failed: {e}") from e

    n_way = states.shape[2]
    agent_valid = np.concatenate([[True], cond.neighbor_mask]).astype(bool)
    valid_mask = np.repeat(agent_valid[:, None], n_way, axis=1)
    out = []
    for m in range(n_modes):
        s = states[m] * valid_mask[..., None]
        out.append(TrajectoryTensor(s, valid_mask.copy()))
    if return_latents:
        return out, latents
    return out
