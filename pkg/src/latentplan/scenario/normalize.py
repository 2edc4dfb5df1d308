"""Trajectory z-normalization, stats files, and training-time augmentation.

Only the x/y channels are z-normalized; heading sin/cos channels are already
bounded and pass through so the unit-circle invariant survives. Padded
(masked) entries stay exactly zero on both sides of the transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import SceneCondition, TrajectoryTensor


@dataclass
class NormStats:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(4))
    std: np.ndarray = field(default_factory=lambda: np.ones(4))
    latent_scale: float = 1.0

    def validate(self) -> None:
        if np.any(self.std <= 0):
            raise ValueError("normalization std must be positive on every channel")

    def save(self, path) -> None:
        with open(path, "w") as f:
            for i, name in enumerate(("x", "y", "sin", "cos")):
                f.write(f"mean_{name}={float(self.mean[i])!r}\n")
                f.write(f"std_{name}={float(self.std[i])!r}\n")
            f.write(f"latent_scale={float(self.latent_scale)!r}\n")

    @classmethod
    def load(cls, path) -> "NormStats":
        kv = {}
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                k, v = line.split("=", 1)
                kv[k] = float(v)
        mean = np.array([kv[f"mean_{n}"] for n in ("x", "y", "sin", "cos")])
        std = np.array([kv[f"std_{n}"] for n in ("x", "y", "sin", "cos")])
        return cls(mean, std, kv.get("latent_scale", 1.0))


def compute_norm_stats(trajectories: list[TrajectoryTensor]) -> NormStats:
    """Per-channel stats of valid x/y entries; sin/cos pass through."""
    xs, ys = [], []
    for t in trajectories:
        m = t.valid_mask
        xs.append(t.states[..., 0][m])
        ys.append(t.states[..., 1][m])
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    mean = np.array([x.mean(), y.mean(), 0.0, 0.0])
    std = np.array([max(x.std(), 1e-6), max(y.std(), 1e-6), 1.0, 1.0])
    return NormStats(mean, std)


def normalize(traj: TrajectoryTensor, stats: NormStats) -> TrajectoryTensor:
    stats.validate()
    out = (traj.states - stats.mean) / stats.std
    out = out * traj.valid_mask[..., None]
    return TrajectoryTensor(out, traj.valid_mask.copy())


def denormalize(traj: TrajectoryTensor, stats: NormStats) -> TrajectoryTensor:
    stats.validate()
    out = traj.states * stats.std + stats.mean
    out = out * traj.valid_mask[..., None]
    return TrajectoryTensor(out, traj.valid_mask.copy())


def denormalize_array(states: np.ndarray, stats: NormStats,
                      project_heading: bool = True) -> np.ndarray:
    """Denormalize raw decoder output and project (sin, cos) to the unit circle."""
    out = states * stats.std + stats.mean
    if project_heading:
        norm = np.hypot(out[..., 2], out[..., 3])
        norm = np.where(norm < 1e-8, 1.0, norm)
        out = out.copy()
        out[..., 2] /= norm
        out[..., 3] /= norm
    return out


@dataclass
class AugmentConfig:
    max_position: float = 0.5   # m
    max_heading: float = 0.1    # rad
    blend_steps: int = 10       # 1 s at 10 Hz


def augment(sample: tuple[TrajectoryTensor, SceneCondition],
            rng: np.random.Generator,
            config: AugmentConfig) -> tuple[TrajectoryTensor, SceneCondition]:
    """Perturb the ego current state and cubically rejoin the expert path.

    Only the first `blend_steps` future ego states change; neighbors and the
    scene condition are untouched.
    """
    traj, cond = sample
    out = traj.copy()
    if config.max_position == 0.0 and config.max_heading == 0.0:
        return out, cond

    dx, dy = rng.uniform(-config.max_position, config.max_position, size=2)
    dtheta = rng.uniform(-config.max_heading, config.max_heading)

    n = config.blend_steps
    t = np.arange(n + 1) / n
    # cubic hermite falloff: w(0)=1, w'(0)=0, w(1)=0, w'(1)=0
    w = (1.0 - t) ** 2 * (1.0 + 2.0 * t)

    ego = out.states[0]
    ego[: n + 1, 0] += w * dx
    ego[: n + 1, 1] += w * dy
    sin, cos = ego[: n + 1, 2].copy(), ego[: n + 1, 3].copy()
    dth = w * dtheta
    ego[: n + 1, 2] = sin * np.cos(dth) + cos * np.sin(dth)
    ego[: n + 1, 3] = cos * np.cos(dth) - sin * np.sin(dth)
    return out, cond
