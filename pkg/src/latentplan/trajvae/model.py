"""Trajectory beta-VAE: query-based encoder, waypoint-query decoder.

The encoder compresses each agent's future trajectory independently: learnable
queries are prepended to the projected waypoint sequence and self-attention is
restricted per trajectory (agents sit on a leading batch axis), so swapping two
neighbor rows swaps the corresponding latent rows. A config flag enables joint
attention across agents for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics.nn import (
    MLP,
    Linear,
    Module,
    MultiHeadCrossAttention,
    LayerNorm,
    TransformerBlock,
    trunc_normal,
)
from ..numerics.tensor import NumericsError, Tensor, concat, get_default_dtype


@dataclass
class VaeConfig:
    hidden: int = 128
    blocks: int = 3
    heads: int = 4
    latent_dim: int = 10       # L
    enc_queries: int = 4       # N per agent
    dec_cond: int = 16         # C reconstruction features
    lam: float = 0.01          # differential-loss weight
    beta: float = 1e-6         # KL weight
    log_std_min: float = -10.0
    log_std_max: float = 4.0
    joint_attention: bool = False  # attend across agents jointly (alternative reading)

    def validate(self) -> None:
        if self.lam < 0 or self.beta < 0:
            raise ValueError("lam and beta must be >= 0")


@dataclass
class GaussianLatent:
    mu: Tensor      # (..., 1+M, L)
    sigma: Tensor   # (..., 1+M, L), componentwise std > 0


class TrajectoryVae(Module):
    def __init__(self, config: VaeConfig, n_agents: int, n_waypoints: int,
                 rng: np.random.Generator):
        """n_agents = 1 + M rows; n_waypoints = 1 + T states per row."""
        config.validate()
        H, N, C, L = config.hidden, config.enc_queries, config.dec_cond, config.latent_dim
        self.config = config
        self.n_agents = n_agents
        self.n_waypoints = n_waypoints

        self.in_proj = MLP([4, H, H], rng)
        self.ego_queries = Tensor(trunc_normal(rng, (N, H)), requires_grad=True)
        self.neighbor_queries = Tensor(trunc_normal(rng, (N, H)), requires_grad=True)
        self.enc_blocks = [TransformerBlock(H, config.heads, rng)
                           for _ in range(config.blocks)]
        self.latent_head = MLP([N * H, H, 2 * L], rng)

        self.cond_proj = MLP([L, H, C * H], rng)
        self.ego_wp_queries = Tensor(trunc_normal(rng, (n_waypoints, H)), requires_grad=True)
        self.neighbor_wp_queries = Tensor(trunc_normal(rng, (n_waypoints, H)), requires_grad=True)
        self.dec_cross = [MultiHeadCrossAttention(H, config.heads, rng)
                          for _ in range(config.blocks)]
        self.dec_norms = [LayerNorm(H) for _ in range(config.blocks)]
        self.dec_ffn = [MLP([H, 2 * H, H], rng) for _ in range(config.blocks)]
        self.dec_ffn_norms = [LayerNorm(H) for _ in range(config.blocks)]
        self.out_proj = MLP([H, H, 4], rng)

    # -- encoder ---------------------------------------------------------------

    def _agent_queries(self, lead_shape) -> Tensor:
        """(1+M, N, H) query bank broadcast over leading batch dims."""
        q = concat([self.ego_queries.reshape(1, *self.ego_queries.shape)] +
                   [self.neighbor_queries.reshape(1, *self.neighbor_queries.shape)] *
                   (self.n_agents - 1), axis=0)
        if lead_shape:
            data = np.broadcast_to(q.data, lead_shape + q.shape).copy()
            lead = int(np.prod(lead_shape))

            def backward(g):
                return (g.reshape((lead,) + q.shape).sum(axis=0),)

            return Tensor(data, requires_grad=q.requires_grad, _parents=(q,), _backward=backward)
        return q

    def encode(self, states: np.ndarray, valid_mask: np.ndarray) -> GaussianLatent:
        """states (..., 1+M, 1+T, 4) normalized; valid_mask (..., 1+M, 1+T)."""
        if states.shape[-3] != self.n_agents or states.shape[-2] != self.n_waypoints:
            raise NumericsError(
                f"expected (..., {self.n_agents}, {self.n_waypoints}, 4), got {states.shape}")
        dtype = get_default_dtype()
        mask = np.asarray(valid_mask, dtype=dtype)
        x = Tensor(np.asarray(states, dtype=dtype) * mask[..., None])
        tokens = self.in_proj(x)  # (..., 1+M, 1+T, H)
        queries = self._agent_queries(states.shape[:-3])
        seq = concat([queries, tokens], axis=-2)  # (..., 1+M, N+1+T, H)

        N = self.config.enc_queries
        key_mask = np.concatenate(
            [np.ones(mask.shape[:-1] + (N,), dtype=bool), valid_mask.astype(bool)], axis=-1)
        if self.config.joint_attention:
            lead = seq.shape[:-3]
            flat = seq.reshape(lead + (self.n_agents * seq.shape[-2], seq.shape[-1]))
            flat_mask = key_mask.reshape(key_mask.shape[:-2] + (-1,))
            for block in self.enc_blocks:
                flat = block(flat, key_mask=flat_mask)
            seq = flat.reshape(lead + (self.n_agents, -1, seq.shape[-1]))
        else:
            for block in self.enc_blocks:
                seq = block(seq, key_mask=key_mask)

        q_out = seq[..., :N, :]
        flat = q_out.reshape(q_out.shape[:-2] + (N * self.config.hidden,))
        head = self.latent_head(flat)
        L = self.config.latent_dim
        mu = head[..., :L]
        log_std = head[..., L:].clip(self.config.log_std_min, self.config.log_std_max)
        return GaussianLatent(mu=mu, sigma=log_std.exp())

    # -- decoder ---------------------------------------------------------------

    def decode(self, z: Tensor) -> Tensor:
        """z (..., 1+M, L) -> reconstructed states (..., 1+M, 1+T, 4), normalized."""
        z = Tensor._lift(z)
        if z.shape[-1] != self.config.latent_dim or z.shape[-2] != self.n_agents:
            raise NumericsError(
                f"expected latent (..., {self.n_agents}, {self.config.latent_dim}), got {z.shape}")
        H, C = self.config.hidden, self.config.dec_cond
        recon = self.cond_proj(z).reshape(z.shape[:-1] + (C, H))

        q = concat([self.ego_wp_queries.reshape(1, *self.ego_wp_queries.shape)] +
                   [self.neighbor_wp_queries.reshape(1, *self.neighbor_wp_queries.shape)] *
                   (self.n_agents - 1), axis=0)
        if z.ndim > 2:
            lead = z.shape[:-2]
            n = int(np.prod(lead))
            base = q
            base_shape = base.shape
            qdata = np.broadcast_to(base.data, lead + base_shape).copy()

            def backward(g):
                return (g.reshape((n,) + base_shape).sum(axis=0),)

            q = Tensor(qdata, requires_grad=base.requires_grad, _parents=(base,), _backward=backward)

        for cross, norm, ffn, fnorm in zip(self.dec_cross, self.dec_norms,
                                           self.dec_ffn, self.dec_ffn_norms):
            q = q + cross(norm(q), recon)
            q = q + ffn(fnorm(q))
        return self.out_proj(q)

    def reconstruct_mean(self, states: np.ndarray, valid_mask: np.ndarray) -> np.ndarray:
        """decode(encode-mean) without gradient tracking; normalized space."""
        g = self.encode(states, valid_mask)
        return self.decode(g.mu.detach()).data


def reparameterize(g: GaussianLatent, noise: np.ndarray) -> Tensor:
    """z = mu + sigma * eps with caller-supplied standard-normal eps."""
    eps = np.asarray(noise, dtype=g.mu.dtype)
    if eps.shape != g.mu.shape:
        raise NumericsError(f"noise shape {eps.shape} != latent shape {g.mu.shape}")
    return g.mu + g.sigma * Tensor(eps)
