from .losses import diffusion_loss
from .sampler import (DenoiseFn, NfeCounter, SamplerConfig, SamplerError,
                      cfg_combine, dpm_solve, guided_denoiser, sample_prior)
from .schedule import (NoiseSchedule, ScheduleError, alpha_sigma, forward_noise,
                       invert_log_snr, log_snr)

__all__ = [
    "DenoiseFn", "NfeCounter", "NoiseSchedule", "SamplerConfig", "SamplerError",
    "ScheduleError", "alpha_sigma", "cfg_combine", "diffusion_loss", "dpm_solve",
    "forward_noise", "guided_denoiser", "invert_log_snr", "log_snr", "sample_prior",
]
