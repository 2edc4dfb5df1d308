"""Few-step ODE sampler for the latent denoiser (data-prediction form)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .schedule import NoiseSchedule, ScheduleError, alpha_sigma, invert_log_snr, log_snr

DenoiseFn = Callable[[np.ndarray, float], np.ndarray]


class SamplerError(ValueError):
    pass


@dataclass
class SamplerConfig:
    order: int = 2
    steps: int = 2
    guidance: float = 1.0
    temperature: float = 1.0
    grid: str = "uniform_t"  # or "uniform_lambda"

    def __post_init__(self):
        if self.order not in (1, 2):
            raise SamplerError(f"order must be 1 or 2, got {self.order}")
        if self.steps < 1:
            raise SamplerError(f"steps must be >= 1, got {self.steps}")
        if self.temperature < 0.0:
            raise SamplerError(f"temperature must be >= 0, got {self.temperature}")
        if self.grid not in ("uniform_t", "uniform_lambda"):
            raise SamplerError(f"unknown step grid {self.grid!r}")


class NfeCounter:
    """Counts denoiser evaluations; shared between sampler and guidance wrapper."""

    def __init__(self):
        self.count = 0

    def tick(self):
        self.count += 1


def cfg_combine(uncond: np.ndarray, cond: np.ndarray, omega: float) -> np.ndarray:
    """Guided prediction uncond + omega * (cond - uncond); omega=1 returns cond as is."""
    if omega == 1.0:
        return cond
    return uncond + omega * (cond - uncond)


def guided_denoiser(cond_fn: DenoiseFn, uncond_fn: DenoiseFn, omega: float,
                    counter: NfeCounter | None = None) -> DenoiseFn:
    """Classifier-free guidance wrapper.

    At omega == 1 the unconditional branch is never evaluated, so the result
    and the evaluation count match plain conditional sampling exactly. The
    sampler counts one evaluation per call it makes; this wrapper counts only
    the extra unconditional pass.
    """
    def fn(z: np.ndarray, t: float) -> np.ndarray:
        cond = cond_fn(z, t)
        if omega == 1.0:
            return cond
        uncond = uncond_fn(z, t)
        if counter is not None:
            counter.tick()
        return cfg_combine(uncond, cond, omega)
    return fn


def sample_prior(rng: np.random.Generator, shape: tuple, temperature: float = 1.0):
    """Starting latents z_1 ~ temperature * N(0, I) (the t=1 marginal is ~unit)."""
    return temperature * rng.standard_normal(shape)


def dpm_solve(schedule: NoiseSchedule, denoise: DenoiseFn, z1: np.ndarray,
              config: SamplerConfig, counter: NfeCounter | None = None,
              return_state: bool = False):
    """Integrate the probability-flow ODE from t=1 to t_min in `config.steps` steps.

    `denoise(z, t)` must return the clean-sample prediction at noise level t
    (guidance, if any, is already folded in by the caller). Updates are exact
    in log-SNR space when the prediction is constant over a step:

        z_t = (sigma_t / sigma_s) z_s - alpha_t (e^{-h} - 1) x0,
        h = lambda(t) - lambda(s).

    order=1 uses x0 at the step start; order=2 re-evaluates at the log-SNR
    midpoint of each step. Returns the clean prediction from the final
    denoiser evaluation, so evaluation counts are exactly order * steps.
    With return_state=True, returns (x0, z_at_t_min) instead.
    """
    if config.grid == "uniform_t":
        times = np.linspace(1.0, schedule.t_min, config.steps + 1)
    else:
        lams = np.linspace(float(log_snr(schedule, 1.0)),
                           float(log_snr(schedule, schedule.t_min)), config.steps + 1)
        times = np.array([1.0] + [invert_log_snr(schedule, float(l)) for l in lams[1:-1]]
                         + [schedule.t_min])
    z = z1
    x0 = None
    for i in range(1, config.steps + 1):
        t_s, t_t = float(times[i - 1]), float(times[i])
        lam_s = float(log_snr(schedule, t_s))
        lam_t = float(log_snr(schedule, t_t))
        h = lam_t - lam_s
        _, sigma_s = alpha_sigma(schedule, t_s)
        alpha_t, sigma_t = alpha_sigma(schedule, t_t)
        x0 = denoise(z, t_s)
        if counter is not None:
            counter.tick()
        if config.order == 2:
            t_mid = invert_log_snr(schedule, lam_s + 0.5 * h, lo=t_t, hi=t_s)
            alpha_m, sigma_m = alpha_sigma(schedule, t_mid)
            z_mid = (sigma_m / sigma_s) * z - alpha_m * (np.exp(-0.5 * h) - 1.0) * x0
            x0 = denoise(z_mid, t_mid)
            if counter is not None:
                counter.tick()
        z = (sigma_t / sigma_s) * z - alpha_t * (np.exp(-h) - 1.0) * x0
    if return_state:
        return x0, z
    return x0
