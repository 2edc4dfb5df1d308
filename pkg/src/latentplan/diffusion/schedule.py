"""Variance-preserving noise schedule and its closed-form signal/noise rates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    """Continuous-time variance-preserving schedule on t in [0, 1].

    The noise rate grows linearly from beta_min at t=0 to beta_max at t=1;
    alpha(t)^2 + sigma(t)^2 == 1 for every t. Sampling integrates down to
    t_min rather than exactly 0 to keep log-SNR finite.
    """

    beta_min: float = 0.1
    beta_max: float = 20.0
    t_min: float = 1e-3

    def __post_init__(self):
        if not (0.0 < self.beta_min < self.beta_max):
            raise ScheduleError(
                f"need 0 < beta_min < beta_max, got {self.beta_min}, {self.beta_max}")
        if not (0.0 < self.t_min < 1.0):
            raise ScheduleError(f"t_min must lie in (0, 1), got {self.t_min}")


def alpha_sigma(schedule: NoiseSchedule, t):
    """Signal rate alpha(t) and noise rate sigma(t); t scalar or ndarray in [0, 1]."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ScheduleError("t outside [0, 1]")
    log_alpha = -0.25 * (schedule.beta_max - schedule.beta_min) * t ** 2 \
        - 0.5 * schedule.beta_min * t
    alpha = np.exp(log_alpha)
    sigma = np.sqrt(1.0 - alpha ** 2)
    return alpha, sigma


def log_snr(schedule: NoiseSchedule, t):
    """Half log signal-to-noise ratio lambda(t) = log(alpha / sigma).

    Monotonically decreasing in t; diverges to +inf as t -> 0, so callers
    must keep t >= t_min.
    """
    alpha, sigma = alpha_sigma(schedule, t)
    if np.any(sigma == 0.0):
        raise ScheduleError("log-SNR is infinite at t = 0")
    return np.log(alpha / sigma)


def invert_log_snr(schedule: NoiseSchedule, lam: float,
                   lo: float | None = None, hi: float = 1.0) -> float:
    """Find t in [t_min, 1] with log_snr(t) == lam, by bisection.

    lambda(t) is strictly decreasing, so the root is unique when it exists.
    """
    lo = schedule.t_min if lo is None else lo
    f_lo = float(log_snr(schedule, lo))
    f_hi = float(log_snr(schedule, hi))
    if not (f_hi <= lam <= f_lo):
        raise ScheduleError(f"lambda {lam} outside [{f_hi}, {f_lo}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if float(log_snr(schedule, mid)) >= lam:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def forward_noise(schedule: NoiseSchedule, z0: np.ndarray, t, noise: np.ndarray):
    """Diffuse clean latents: z_t = alpha(t) z0 + sigma(t) eps.

    t may be scalar or one value per batch element (leading axis of z0).
    """
    if noise.shape != z0.shape:
        raise ScheduleError(f"noise shape {noise.shape} != z0 shape {z0.shape}")
    alpha, sigma = alpha_sigma(schedule, t)
    alpha = np.reshape(alpha, np.shape(alpha) + (1,) * (z0.ndim - np.ndim(alpha)))
    sigma = np.reshape(sigma, np.shape(sigma) + (1,) * (z0.ndim - np.ndim(sigma)))
    return alpha * z0 + sigma * noise
