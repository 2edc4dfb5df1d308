"""Conditional latent denoiser: scene encoders, DiT blocks, initial-state injection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics.nn import (MLP, AdaLN, LayerNorm, Linear, MixerBlock, Module,
                           MultiHeadCrossAttention, MultiHeadSelfAttention,
                           TransformerBlock, sinusoidal_embedding)
from ..numerics.tensor import NumericsError, Tensor, concat, get_default_dtype
from ..scenario.features import SceneCondition, SceneLayout


class PlannerError(ValueError):
    pass


@dataclass
class PlannerConfig:
    hidden: int = 128
    blocks: int = 3
    heads: int = 4
    latent_dim: int = 10
    alpha: float = 0.75           # distillation weight in the training loss
    student_layer: int = 3        # 1-based block index whose features feed the head
    route_dropout: float = 0.1
    mixer_depth: int = 2
    fusion_depth: int = 2
    ff_mult: int = 4
    pixel_space: bool = False     # denoise flattened trajectories instead of latents
    use_initial_state: bool = True
    separate_route_modulation: bool = False
    distill_objective: str = "mse"   # or "cosine"
    ablation: str | None = None      # None or "pixel"
    teacher_mode: str = "clean"      # or "half_noise" / "full_noise"
    teacher_layer: str = "final"     # or "layer1"

    def __post_init__(self):
        if self.alpha < 0:
            raise PlannerError(f"alpha must be >= 0, got {self.alpha}")
        if not (0.0 <= self.route_dropout < 1.0):
            raise PlannerError(f"route dropout must be in [0, 1), got {self.route_dropout}")
        if not (1 <= self.student_layer <= self.blocks):
            raise PlannerError(
                f"student layer {self.student_layer} outside 1..{self.blocks}")
        if self.distill_objective not in ("mse", "cosine"):
            raise PlannerError(f"unknown distillation objective {self.distill_objective!r}")
        if self.ablation not in (None, "pixel"):
            raise PlannerError(f"unknown ablation {self.ablation!r}")
        if self.teacher_mode not in ("clean", "half_noise", "full_noise"):
            raise PlannerError(f"unknown teacher mode {self.teacher_mode!r}")
        if self.teacher_layer not in ("final", "layer1"):
            raise PlannerError(f"unknown teacher layer {self.teacher_layer!r}")


@dataclass
class BatchedCondition:
    """SceneConditions stacked along a leading batch axis."""
    neighbor_history: np.ndarray  # (B, M, A, 11)
    neighbor_mask: np.ndarray     # (B, M)
    lanes: np.ndarray             # (B, N, P, 12)
    lane_mask: np.ndarray         # (B, N)
    static_obstacle: np.ndarray   # (B, 6)
    static_mask: np.ndarray       # (B,)
    route: np.ndarray             # (B, K, P, 12)
    route_mask: np.ndarray        # (B, K)


def stack_conditions(conds: list[SceneCondition]) -> BatchedCondition:
    return BatchedCondition(
        np.stack([c.neighbor_history for c in conds]),
        np.stack([c.neighbor_mask for c in conds]),
        np.stack([c.lanes for c in conds]),
        np.stack([c.lane_mask for c in conds]),
        np.stack([c.static_obstacle for c in conds]),
        np.array([c.static_mask for c in conds], dtype=bool),
        np.stack([c.route for c in conds]),
        np.stack([c.route_mask for c in conds]),
    )


@dataclass
class SceneFeatures:
    tokens: Tensor           # (B, M + N + 1, H) fused context
    token_mask: np.ndarray   # (B, M + N + 1) bool
    route_embedding: Tensor  # (B, H)


@dataclass
class DenoiserOutput:
    z0_hat: Tensor               # (B, 1+M, L)
    hidden_layers: list[Tensor]  # per block, (B, 1+M, H)


class _PolylineMixer(Module):
    """Encodes (.., tokens, d_in) polylines to one feature vector each."""

    def __init__(self, d_in: int, tokens: int, hidden: int, depth: int,
                 rng: np.random.Generator):
        self.proj = Linear(d_in, hidden, rng)
        self.mixers = [MixerBlock(tokens, hidden, rng) for _ in range(depth)]
        self.norm = LayerNorm(hidden)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.proj(x)
        for m in self.mixers:
            h = m(h)
        return self.norm(h).mean(axis=-2)


class SceneEncoder(Module):
    """Per-family encoders plus a fusion transformer over all context tokens."""

    def __init__(self, cfg: PlannerConfig, layout: SceneLayout, rng: np.random.Generator):
        H = cfg.hidden
        self.layout = layout
        self.neighbor_mixer = _PolylineMixer(11, layout.history, H, cfg.mixer_depth, rng)
        self.lane_mixer = _PolylineMixer(12, layout.points_per_lane, H, cfg.mixer_depth, rng)
        self.static_mlp = MLP([6, H, H], rng)
        self.fusion = [TransformerBlock(H, cfg.heads, rng, ff_mult=cfg.ff_mult)
                       for _ in range(cfg.fusion_depth)]
        self.route_lane_mixer = _PolylineMixer(12, layout.points_per_lane, H,
                                               cfg.mixer_depth, rng)
        self.route_mixer = [MixerBlock(layout.n_route_lanes, H, rng)
                            for _ in range(cfg.mixer_depth)]
        self.route_norm = LayerNorm(H)

    def __call__(self, cond: BatchedCondition) -> SceneFeatures:
        dt = get_default_dtype()
        # zero masked inputs so padding can never leak into valid outputs
        nb = cond.neighbor_history * cond.neighbor_mask[:, :, None, None].astype(dt)
        ln = cond.lanes * cond.lane_mask[:, :, None, None].astype(dt)
        st = cond.static_obstacle * cond.static_mask[:, None].astype(dt)
        rt = cond.route * cond.route_mask[:, :, None, None].astype(dt)

        nb_tok = self.neighbor_mixer(Tensor(nb.astype(dt)))      # (B, M, H)
        lane_tok = self.lane_mixer(Tensor(ln.astype(dt)))        # (B, N, H)
        st_tok = self.static_mlp(Tensor(st.astype(dt)))[:, None, :]  # (B, 1, H)
        tokens = concat([nb_tok, lane_tok, st_tok], axis=1)
        token_mask = np.concatenate(
            [cond.neighbor_mask, cond.lane_mask, cond.static_mask[:, None]], axis=1)
        tokens = tokens * token_mask[:, :, None].astype(dt)
        for blk in self.fusion:
            tokens = blk(tokens, key_mask=token_mask)
        tokens = tokens * token_mask[:, :, None].astype(dt)

        route_lane = self.route_lane_mixer(Tensor(rt.astype(dt)))  # (B, K, H)
        route_lane = route_lane * cond.route_mask[:, :, None].astype(dt)
        for m in self.route_mixer:
            route_lane = m(route_lane)
        w = cond.route_mask.astype(dt)
        denom = np.maximum(w.sum(axis=1, keepdims=True), 1.0)
        route = (self.route_norm(route_lane) * w[:, :, None]).sum(axis=1) / denom
        return SceneFeatures(tokens, token_mask, route)


class DiTBlock(Module):
    """Adaptive-LN transformer block: self-attention, scene cross-attention, FFN."""

    def __init__(self, dim: int, heads: int, cond_dim: int, rng: np.random.Generator,
                 ff_mult: int = 4):
        self.ada1 = AdaLN(dim, cond_dim, rng)
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.ada2 = AdaLN(dim, cond_dim, rng)
        self.cross = MultiHeadCrossAttention(dim, heads, rng)
        self.ada3 = AdaLN(dim, cond_dim, rng)
        self.ffn = MLP([dim, ff_mult * dim, dim], rng)

    def __call__(self, x: Tensor, cond: Tensor, scene: Tensor,
                 scene_mask: np.ndarray) -> Tensor:
        x = x + self.attn(self.ada1(x, cond))
        x = x + self.cross(self.ada2(x, cond), scene, key_mask=scene_mask)
        return x + self.ffn(self.ada3(x, cond))


class Denoiser(Module):
    """Predicts clean latents from noised latents, time, and scene context.

    Operates on (B, 1+M, D_in) tokens; D_in is the latent dim for the planner
    and the flattened per-agent trajectory for the pixel-level teacher.
    """

    def __init__(self, cfg: PlannerConfig, layout: SceneLayout, d_in: int,
                 rng: np.random.Generator):
        H = cfg.hidden
        self.cfg = cfg
        self.d_in = d_in
        self.scene = SceneEncoder(cfg, layout, rng)
        self.z_proj = Linear(d_in, H, rng)
        self.t_mlp = MLP([H, H, H], rng)
        self.init_mlp = MLP([4, H, H], rng)
        self.null_route = Tensor(np.zeros(H, dtype=get_default_dtype()),
                                 requires_grad=True)
        self.dit = [DiTBlock(H, cfg.heads, H, rng, ff_mult=cfg.ff_mult)
                    for _ in range(cfg.blocks)]
        self.route_ada = AdaLN(H, H, rng) if cfg.separate_route_modulation else None
        self.out_norm = LayerNorm(H)
        self.head = Linear(H, d_in, rng, zero_init=True)

    def initial_state_embedding(self, s_init: np.ndarray) -> Tensor:
        """(B, M, 4) neighbor initial states -> (B, 1+M, H); ego row exactly zero."""
        dt = get_default_dtype()
        emb = self.init_mlp(Tensor(s_init.astype(dt)))
        zero = Tensor(np.zeros(emb.shape[:1] + (1,) + emb.shape[2:], dtype=dt))
        return concat([zero, emb], axis=1)

    def __call__(self, z_t: np.ndarray | Tensor, t, cond: BatchedCondition,
                 s_init: np.ndarray | None = None,
                 drop_route_mask: np.ndarray | None = None,
                 features: SceneFeatures | None = None) -> DenoiserOutput:
        dt = get_default_dtype()
        if not isinstance(z_t, Tensor):
            z_t = Tensor(z_t.astype(dt))
        if z_t.shape[-1] != self.d_in:
            raise PlannerError(f"latent dim {z_t.shape[-1]}, model built for {self.d_in}")
        B = z_t.shape[0]
        if features is None:
            features = self.scene(cond)

        t_arr = np.broadcast_to(np.asarray(t, dtype=dt), (B,))
        t_emb = self.t_mlp(Tensor(sinusoidal_embedding(t_arr, self.cfg.hidden)))
        route = features.route_embedding
        if drop_route_mask is not None:
            keep = Tensor(1.0 - drop_route_mask.astype(dt)[:, None])
            route = route * keep + self.null_route.reshape((1, -1)) * (1.0 - keep)
        if self.route_ada is None:
            ada_cond = t_emb + route
        else:
            ada_cond = t_emb

        x = self.z_proj(z_t)
        e_init = None
        if self.cfg.use_initial_state and s_init is not None:
            e_init = self.initial_state_embedding(s_init)
            x = x + e_init
        hidden = []
        for blk in self.dit:
            if self.route_ada is not None:
                x = self.route_ada(x, route)
            x = blk(x, ada_cond, features.tokens, features.token_mask)
            hidden.append(x)
        if e_init is not None:
            x = x + e_init
            hidden[-1] = x
        z0_hat = self.head(self.out_norm(x))
        if not np.all(np.isfinite(z0_hat.data)):
            raise NumericsError("denoiser produced non-finite output")
        return DenoiserOutput(z0_hat, hidden)


def drop_route_mask(batch_size: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Per-sample Bernoulli(p) indicator of replacing the route with the null embedding."""
    if not (0.0 <= p < 1.0):
        raise PlannerError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return np.zeros(batch_size, dtype=bool)
    return rng.random(batch_size) < p
