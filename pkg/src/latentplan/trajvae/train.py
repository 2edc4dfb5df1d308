"""VAE training loop, held-out reconstruction metrics, latent scale estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics.optim import AdamW
from ..numerics.rng import make_rng
from ..numerics.tensor import NumericsError, get_default_dtype, set_default_dtype
from ..scenario.features import TrajectoryTensor
from ..scenario.normalize import NormStats, denormalize_array, normalize
from .losses import vae_loss
from .model import GaussianLatent, TrajectoryVae, VaeConfig, reparameterize


@dataclass
class VaeTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.0
    val_fraction: float = 0.1
    dtype: str = "float32"
    eval_batch: int = 64
    warmup_epochs: int = 0
    lr_min_ratio: float = 1.0  # 1.0 keeps lr constant; <1 enables cosine decay


def epoch_lr(tcfg: VaeTrainConfig, epoch: int) -> float:
    """Linear warmup followed by cosine decay down to lr * lr_min_ratio."""
    if tcfg.warmup_epochs > 0 and epoch < tcfg.warmup_epochs:
        return tcfg.lr * (epoch + 1) / tcfg.warmup_epochs
    span = max(tcfg.epochs - tcfg.warmup_epochs, 1)
    frac = (epoch - tcfg.warmup_epochs) / span
    lo = tcfg.lr * tcfg.lr_min_ratio
    return lo + 0.5 * (tcfg.lr - lo) * (1.0 + np.cos(np.pi * frac))


def stack_trajectories(trajectories: list[TrajectoryTensor], stats: NormStats):
    states = np.stack([normalize(t, stats).states for t in trajectories])
    masks = np.stack([t.valid_mask for t in trajectories])
    return states, masks


def reconstruction_ade(vae: TrajectoryVae, states: np.ndarray, masks: np.ndarray,
                       stats: NormStats, batch: int = 64) -> tuple[float, float]:
    """(ego ADE, neighbor ADE) in meters of decode(encode-mean) reconstructions."""
    ego_err, ego_n = 0.0, 0
    nb_err, nb_n = 0.0, 0
    for i in range(0, states.shape[0], batch):
        s = states[i:i + batch]
        m = masks[i:i + batch]
        recon = vae.reconstruct_mean(s, m)
        world_r = denormalize_array(recon, stats)
        world_t = denormalize_array(s, stats, project_heading=False)
        d = np.linalg.norm(world_r[..., :2] - world_t[..., :2], axis=-1)  # (B, 1+M, 1+T)
        valid = m.astype(bool)
        ego_err += d[:, 0][valid[:, 0]].sum()
        ego_n += int(valid[:, 0].sum())
        nb_err += d[:, 1:][valid[:, 1:]].sum()
        nb_n += int(valid[:, 1:].sum())
    return (ego_err / max(ego_n, 1), nb_err / max(nb_n, 1))


def train_vae(trajectories: list[TrajectoryTensor], stats: NormStats,
              config: VaeConfig, tcfg: VaeTrainConfig, seed: int,
              log_fn=None):
    """Train the trajectory VAE; deterministic given the seed.

    Returns (vae, report) where report is a list of per-epoch dicts with loss
    components and held-out ego/neighbor ADE.
    """
    if not trajectories:
        raise ValueError("empty training set")
    prev_dtype = get_default_dtype()
    set_default_dtype(tcfg.dtype)
    try:
        n_agents, n_waypoints = trajectories[0].states.shape[:2]
        rng_model = make_rng(seed, stream=1)
        rng_train = make_rng(seed, stream=2)
        vae = TrajectoryVae(config, n_agents, n_waypoints, rng_model)
        opt = AdamW(vae.named_parameters(), lr=tcfg.lr, weight_decay=tcfg.weight_decay)

        states, masks = stack_trajectories(trajectories, stats)
        states = states.astype(get_default_dtype())
        n = states.shape[0]
        n_val = max(1, int(n * tcfg.val_fraction)) if n > 1 else 0
        val_states, val_masks = states[n - n_val:], masks[n - n_val:]
        tr_states, tr_masks = states[: n - n_val], masks[: n - n_val]
        n_tr = tr_states.shape[0]

        report = []
        for epoch in range(tcfg.epochs):
            opt.lr = epoch_lr(tcfg, epoch)
            order = rng_train.permutation(n_tr)
            comps_sum = {"recon": 0.0, "diff": 0.0, "kl": 0.0}
            n_batches = 0
            for i in range(0, n_tr, tcfg.batch_size):
                idx = order[i:i + tcfg.batch_size]
                s, m = tr_states[idx], tr_masks[idx]
                g = vae.encode(s, m)
                noise = rng_train.standard_normal(g.mu.shape)
                z = reparameterize(g, noise)
                recon = vae.decode(z)
                loss, comps = vae_loss(s, recon, g, config.lam, config.beta, m)
                if not np.isfinite(loss.item()):
                    raise NumericsError(
                        f"VAE loss diverged at epoch {epoch} batch {n_batches}: {comps}")
                opt.zero_grad()
                loss.backward()
                opt.step()
                for k in comps_sum:
                    comps_sum[k] += comps[k]
                n_batches += 1
            row = {"epoch": epoch}
            row.update({k: v / max(n_batches, 1) for k, v in comps_sum.items()})
            if n_val:
                ego_ade, nb_ade = reconstruction_ade(
                    vae, val_states, val_masks, stats, tcfg.eval_batch)
            else:
                ego_ade = nb_ade = float("nan")
            row["ego_ade"] = ego_ade
            row["neighbor_ade"] = nb_ade
            report.append(row)
            if log_fn is not None:
                log_fn(row)
        return vae, report
    finally:
        set_default_dtype(prev_dtype)


def compute_latent_scale(trajectories: list[TrajectoryTensor], stats: NormStats,
                         vae: TrajectoryVae, seed: int, batch: int = 64) -> float:
    """1 / global std of sampled latents over the training set."""
    rng = make_rng(seed, stream=3)
    states, masks = stack_trajectories(trajectories, stats)
    samples = []
    for i in range(0, states.shape[0], batch):
        g = vae.encode(states[i:i + batch], masks[i:i + batch])
        noise = rng.standard_normal(g.mu.shape)
        z = g.mu.data + g.sigma.data * noise
        agent_valid = masks[i:i + batch].any(axis=-1)
        samples.append(z[agent_valid].reshape(-1))
    flat = np.concatenate(samples)
    std = float(flat.std())
    if std < 1e-8:
        raise NumericsError("degenerate latent distribution (std ~ 0)")
    return 1.0 / std
