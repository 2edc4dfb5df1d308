"""Neural building blocks: attention, adaptive normalization, mixer blocks.

Modules hold their parameters as Tensor attributes; ``named_parameters`` walks
the module tree in attribute insertion order, which keeps checkpoint layouts
and optimizer state deterministic.
"""

from __future__ import annotations

import numpy as np

from .tensor import NumericsError, Tensor, concat, get_default_dtype

LN_EPS = 1e-5
_MASK_NEG = -1e30


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Truncated normal within 2 std, via rejection resampling."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while np.any(bad):
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(get_default_dtype())


class Module:
    """Base class with recursive parameter discovery."""

    def named_tensors(self, prefix: str = "") -> dict[str, Tensor]:
        """Every tensor attribute, trainable or frozen (checkpoint view)."""
        found: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor):
                found[key] = value
            elif isinstance(value, Module):
                found.update(value.named_tensors(f"{key}."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        found.update(item.named_tensors(f"{key}.{i}."))
                    elif isinstance(item, Tensor):
                        found[f"{key}.{i}"] = item
        return found

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        """Trainable tensors only (optimizer view); frozen ones are skipped."""
        return {k: v for k, v in self.named_tensors(prefix).items()
                if v.requires_grad}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_tensors()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise NumericsError(f"state mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for name, tensor in params.items():
            arr = np.asarray(state[name])
            if arr.shape != tensor.shape:
                raise NumericsError(f"shape mismatch for {name}: {arr.shape} vs {tensor.shape}")
            tensor.data = arr.astype(tensor.data.dtype)

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_tensors().items()}


class ParameterDict(Module):
    """A bag of named parameters for ad-hoc use (e.g. learnable queries)."""

    def __init__(self, **tensors: Tensor):
        for k, v in tensors.items():
            setattr(self, k, v)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 zero_init: bool = False):
        if zero_init:
            w = np.zeros((d_in, d_out), dtype=get_default_dtype())
        else:
            w = trunc_normal(rng, (d_in, d_out))
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(d_out, dtype=get_default_dtype()), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class MLP(Module):
    """Stack of Linear layers with GELU between them."""

    def __init__(self, dims: list[int], rng: np.random.Generator,
                 zero_init_last: bool = False):
        if len(dims) < 2:
            raise NumericsError("MLP needs at least input and output dims")
        self.layers = [
            Linear(dims[i], dims[i + 1], rng,
                   zero_init=(zero_init_last and i == len(dims) - 2))
            for i in range(len(dims) - 1)
        ]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = x.gelu()
        return x


def layer_norm(x: Tensor, eps: float = LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean, unit variance (no affine)."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt()


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.weight = Tensor(np.ones(dim, dtype=get_default_dtype()), requires_grad=True)
        self.bias = Tensor(np.zeros(dim, dtype=get_default_dtype()), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x) * self.weight + self.bias


class AdaLN(Module):
    """Adaptive layer normalization: (1 + scale) * LN(x) + shift.

    scale/shift come from a zero-initialized affine map of the conditioning
    vector, so a fresh block starts as plain layer normalization.
    """

    def __init__(self, dim: int, cond_dim: int, rng: np.random.Generator):
        self.proj = Linear(cond_dim, 2 * dim, rng, zero_init=True)
        self.dim = dim

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        mod = self.proj(cond)
        scale = mod[..., : self.dim]
        shift = mod[..., self.dim:]
        if scale.ndim < x.ndim:
            # broadcast the per-sample modulation over the token axis
            scale = scale.reshape(scale.shape[:-1] + (1,) * (x.ndim - scale.ndim) + (self.dim,))
            shift = shift.reshape(shift.shape[:-1] + (1,) * (x.ndim - shift.ndim) + (self.dim,))
        return layer_norm(x) * (1.0 + scale) + shift


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x - Tensor(x.data.max(axis=axis, keepdims=True))
    e = shifted.exp()
    return e / e.sum(axis=axis, keepdims=True)


def _mask_bias(key_mask: np.ndarray, dtype) -> np.ndarray:
    """Additive bias: 0 for valid keys, a large negative for masked keys.

    exp() of the shifted masked logits underflows to exactly 0, so masked
    tokens contribute exactly nothing to the attention output.
    """
    return np.where(key_mask, 0.0, _MASK_NEG).astype(dtype)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, heads: int,
                         key_mask: np.ndarray | None = None):
    """Multi-head scaled dot-product attention.

    q: (..., Nq, H), k/v: (..., Nk, H), key_mask: bool (..., Nk) or (Nk,).
    Returns (output (..., Nq, H), weights (..., heads, Nq, Nk)).
    """
    H = q.shape[-1]
    if H % heads != 0:
        raise NumericsError(f"hidden size {H} not divisible by {heads} heads")
    if k.shape[-2] == 0:
        raise NumericsError("attention requires at least one key")
    dh = H // heads

    def split(t: Tensor) -> Tensor:
        t = t.reshape(t.shape[:-1] + (heads, dh))
        return t.swapaxes(-2, -3)  # (..., heads, N, dh)

    qh, kh, vh = split(q), split(k), split(v)
    logits = (qh @ kh.swapaxes(-1, -2)) * (1.0 / np.sqrt(dh))
    if key_mask is not None:
        bias = _mask_bias(np.asarray(key_mask, dtype=bool), logits.dtype)
        # broadcast over heads and queries
        bias = bias[..., None, None, :] if bias.ndim > 1 else bias
        logits = logits + Tensor(np.broadcast_to(bias, logits.shape).copy())
    weights = softmax(logits, axis=-1)
    out = weights @ vh
    out = out.swapaxes(-2, -3).reshape(q.shape[:-1] + (H,))
    return out, weights


class MultiHeadSelfAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads != 0:
            raise NumericsError(f"hidden size {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = Linear(dim, dim, rng)
        self.k_proj = Linear(dim, dim, rng)
        self.v_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)

    def __call__(self, x: Tensor, key_mask: np.ndarray | None = None,
                 return_weights: bool = False):
        out, w = scaled_dot_attention(
            self.q_proj(x), self.k_proj(x), self.v_proj(x), self.heads, key_mask)
        out = self.out_proj(out)
        return (out, w) if return_weights else out


class MultiHeadCrossAttention(Module):
    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads != 0:
            raise NumericsError(f"hidden size {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = Linear(dim, dim, rng)
        self.k_proj = Linear(dim, dim, rng)
        self.v_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)

    def __call__(self, q: Tensor, kv: Tensor, key_mask: np.ndarray | None = None,
                 return_weights: bool = False):
        out, w = scaled_dot_attention(
            self.q_proj(q), self.k_proj(kv), self.v_proj(kv), self.heads, key_mask)
        out = self.out_proj(out)
        return (out, w) if return_weights else out


class TransformerBlock(Module):
    """Pre-norm transformer block: self-attention + feedforward, residual."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, ff_mult: int = 4):
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng)
        self.norm2 = LayerNorm(dim)
        self.ff = MLP([dim, ff_mult * dim, dim], rng)

    def __call__(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        x = x + self.attn(self.norm1(x), key_mask=key_mask)
        return x + self.ff(self.norm2(x))


class MixerBlock(Module):
    """MLP-Mixer block over a fixed token count: token mixing then channel mixing."""

    def __init__(self, tokens: int, dim: int, rng: np.random.Generator,
                 token_mult: int = 2, channel_mult: int = 2):
        self.tokens = tokens
        self.norm1 = LayerNorm(dim)
        self.token_mlp = MLP([tokens, token_mult * tokens, tokens], rng)
        self.norm2 = LayerNorm(dim)
        self.channel_mlp = MLP([dim, channel_mult * dim, dim], rng)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-2] != self.tokens:
            raise NumericsError(
                f"mixer built for {self.tokens} tokens, got {x.shape[-2]}")
        y = self.norm1(x).swapaxes(-1, -2)
        y = self.token_mlp(y).swapaxes(-1, -2)
        x = x + y
        return x + self.channel_mlp(self.norm2(x))


def sinusoidal_embedding(t: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Classic sinusoidal embedding of scalar times t in [0, 1]."""
    t = np.atleast_1d(np.asarray(t, dtype=get_default_dtype()))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half).astype(t.dtype)
    args = t[..., None] * freqs * 1000.0
    emb = np.concatenate([np.cos(args), np.sin(args)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros_like(emb[..., :1])], axis=-1)
    return emb


__all__ = [
    "Module", "ParameterDict", "Linear", "MLP", "LayerNorm", "AdaLN",
    "MultiHeadSelfAttention", "MultiHeadCrossAttention", "TransformerBlock",
    "MixerBlock", "layer_norm", "softmax", "scaled_dot_attention",
    "sinusoidal_embedding", "trunc_normal", "concat", "LN_EPS",
]
