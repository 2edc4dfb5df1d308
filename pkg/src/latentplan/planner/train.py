"""Planner (and pixel-level teacher) training loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diffusion.schedule import NoiseSchedule
from ..numerics.optim import AdamW
from ..numerics.rng import make_rng
from ..numerics.tensor import NumericsError, get_default_dtype, set_default_dtype
from ..scenario.features import SceneLayout, TrajectoryTensor
from ..scenario.normalize import NormStats, normalize
from .losses import DistillHead, PixelHead, flatten_pixels, total_loss
from .model import (BatchedCondition, Denoiser, PlannerConfig, PlannerError,
                    stack_conditions)


@dataclass
class PlannerTrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 3e-4
    weight_decay: float = 0.0
    warmup_epochs: int = 5
    lr_min_ratio: float = 0.05
    dtype: str = "float32"


class PlannerBundle:
    """Denoiser plus its training-time heads, checkpointed as one unit."""

    def __init__(self, cfg: PlannerConfig, layout: SceneLayout, d_in: int,
                 d_pixel: int, rng: np.random.Generator):
        self.config = cfg
        self.denoiser = Denoiser(cfg, layout, d_in, rng)
        self.distill_head = DistillHead(cfg.hidden, cfg.hidden, cfg.hidden, rng)
        self.pixel_head = PixelHead(cfg.hidden, cfg.hidden, d_pixel, rng)

    def named_tensors(self):
        tensors = {}
        for prefix, mod in (("denoiser", self.denoiser),
                            ("distill_head", self.distill_head),
                            ("pixel_head", self.pixel_head)):
            tensors.update(mod.named_tensors(prefix + "."))
        return tensors

    def named_parameters(self):
        return {k: v for k, v in self.named_tensors().items() if v.requires_grad}

    def state(self):
        return {k: v.data.copy() for k, v in self.named_tensors().items()}

    def load_state(self, state):
        params = self.named_tensors()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise NumericsError(
                f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, tensor in params.items():
            arr = np.asarray(state[name])
            if arr.shape != tensor.shape:
                raise NumericsError(
                    f"shape mismatch for {name}: {arr.shape} vs {tensor.shape}")
            tensor.data = arr.astype(tensor.data.dtype)


def epoch_lr(tcfg: PlannerTrainConfig, epoch: int) -> float:
    """Linear warmup then cosine decay to lr * lr_min_ratio."""
    if tcfg.warmup_epochs > 0 and epoch < tcfg.warmup_epochs:
        return tcfg.lr * (epoch + 1) / tcfg.warmup_epochs
    span = max(tcfg.epochs - tcfg.warmup_epochs, 1)
    frac = (epoch - tcfg.warmup_epochs) / span
    lo = tcfg.lr * tcfg.lr_min_ratio
    return lo + 0.5 * (tcfg.lr - lo) * (1.0 + np.cos(np.pi * frac))


def freeze(module) -> None:
    for p in module.named_tensors().values():
        p.requires_grad = False


def state_checksum(module) -> float:
    return float(sum(np.abs(v).sum() for v in module.state().values()))


def train_planner(samples: list[tuple[TrajectoryTensor, object]], stats: NormStats,
                  cfg: PlannerConfig, tcfg: PlannerTrainConfig, layout: SceneLayout,
                  seed: int, vae=None, teacher: Denoiser | None = None,
                  schedule: NoiseSchedule | None = None):
    """Train the conditional denoiser; deterministic per seed.

    samples are (trajectory, condition) pairs. With cfg.pixel_space the model
    denoises raw trajectories and needs no VAE (used to build the teacher).
    Returns (bundle, report); report rows carry per-epoch mean loss components.
    """
    if not samples:
        raise PlannerError("empty training set")
    if schedule is None:
        schedule = NoiseSchedule()
    if not cfg.pixel_space and vae is None:
        raise PlannerError("latent-space training requires the frozen VAE")
    prev_dtype = get_default_dtype()
    set_default_dtype(tcfg.dtype)
    try:
        trajs = [s[0] for s in samples]
        conds = [s[1] for s in samples]
        states = np.stack([normalize(t, stats).states for t in trajs]).astype(
            get_default_dtype())
        masks = np.stack([t.valid_mask for t in trajs])
        cond_all = stack_conditions(conds)
        n = states.shape[0]
        n_agents, n_way = states.shape[1], states.shape[2]
        d_pixel = n_way * 4
        d_in = d_pixel if cfg.pixel_space else cfg.latent_dim

        rng_model = make_rng(seed, stream=11)
        rng_train = make_rng(seed, stream=12)
        bundle = PlannerBundle(cfg, layout, d_in, d_pixel, rng_model)
        if vae is not None:
            freeze(vae)
        teacher_sum = None
        if teacher is not None:
            freeze(teacher)
            teacher_sum = state_checksum(teacher)
        opt = AdamW(bundle.named_parameters(), lr=tcfg.lr,
                    weight_decay=tcfg.weight_decay)

        report = []
        for epoch in range(tcfg.epochs):
            opt.lr = epoch_lr(tcfg, epoch)
            order = rng_train.permutation(n)
            sums: dict[str, float] = {}
            n_batches = 0
            for i in range(0, n, tcfg.batch_size):
                idx = order[i:i + tcfg.batch_size]
                batch_cond = _index_condition(cond_all, idx)
                loss, comps = total_loss(
                    states[idx], masks[idx], batch_cond, bundle.denoiser,
                    schedule, cfg, rng_train, vae=vae,
                    latent_scale=stats.latent_scale, teacher=teacher,
                    distill_head=bundle.distill_head, pixel_head=bundle.pixel_head)
                if not np.isfinite(loss.item()):
                    raise NumericsError(
                        f"planner loss diverged at epoch {epoch} batch {n_batches}: {comps}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                for k, v in comps.items():
                    sums[k] = sums.get(k, 0.0) + v
                n_batches += 1
            row = {"epoch": epoch, "lr": opt.lr}
            row.update({k: v / max(n_batches, 1) for k, v in sums.items()})
            report.append(row)
        if teacher is not None and state_checksum(teacher) != teacher_sum:
            raise NumericsError("teacher parameters changed during planner training")
        return bundle, report
    finally:
        set_default_dtype(prev_dtype)


def _index_condition(cond: BatchedCondition, idx: np.ndarray) -> BatchedCondition:
    return BatchedCondition(
        cond.neighbor_history[idx], cond.neighbor_mask[idx],
        cond.lanes[idx], cond.lane_mask[idx],
        cond.static_obstacle[idx], cond.static_mask[idx],
        cond.route[idx], cond.route_mask[idx])
