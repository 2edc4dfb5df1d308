"""Autodiff engine, layers, optimizer, and checkpoint format."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latentplan.numerics import (AdamW, LayerNorm, Linear, MLP, MixerBlock,
                                 MultiHeadCrossAttention,
                                 MultiHeadSelfAttention, NumericsError, Tensor,
                                 TransformerBlock, concat, grad_check,
                                 load_checkpoint, make_rng, save_checkpoint,
                                 softmax, stack)
from latentplan.numerics.checkpoint import CheckpointError

from conftest import randomize_zero_init


# -- tensor ops against numpy ------------------------------------------------

@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_elementwise_ops_match_numpy(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(3, 4))
    ta, tb = Tensor(a), Tensor(b)
    assert np.allclose((ta + tb).data, a + b)
    assert np.allclose((ta * tb).data, a * b)
    assert np.allclose((ta - tb).data, a - b)
    assert np.allclose((ta / (tb * tb + 1)).data, a / (b * b + 1))
    assert np.allclose(ta.exp().data, np.exp(a))
    assert np.allclose((ta @ tb.swapaxes(-1, -2)).data, a @ b.T)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_broadcast_gradients(seed):
    """d/dx sum(x * y) with broadcasting must reduce over broadcast axes."""
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(5, 1, 3)), requires_grad=True)
    y = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    (x * y).sum().backward()
    assert x.grad.shape == x.shape
    assert y.grad.shape == y.shape
    assert np.allclose(x.grad, np.broadcast_to(y.data, (5, 4, 3)).sum(1, keepdims=True))
    assert np.allclose(y.grad, x.data.sum(axis=0))


def test_batched_matmul_gradcheck(f64):
    rng = np.random.default_rng(0)
    a = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 4, 5)), requires_grad=True)

    def fn():
        return ((a @ b) ** 2).sum()

    assert grad_check(fn, {"a": a, "b": b}) < 1e-6


def test_getitem_concat_stack_gradients(f64):
    rng = np.random.default_rng(1)
    a = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, 3)), requires_grad=True)

    def fn():
        c = concat([a, b], axis=0)
        s = stack([c[:2], c[2:4]], axis=0)
        return (s * s).sum() + (a[1:, :2] ** 2).sum()

    assert grad_check(fn, {"a": a, "b": b}) < 1e-6


def test_backward_on_non_scalar_raises():
    t = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(NumericsError):
        t.backward()


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(3, 7)) * 10)
    s = softmax(x, axis=-1).data
    assert np.allclose(s.sum(axis=-1), 1.0)
    assert (s >= 0).all()


# -- layers ------------------------------------------------------------------

@pytest.mark.parametrize("layer_idx", range(6))
def test_layer_gradchecks(f64, layer_idx):
    rng = np.random.default_rng(100 + layer_idx)
    x = Tensor(rng.normal(size=(2, 5, 8)), requires_grad=True)
    ctx = Tensor(rng.normal(size=(2, 3, 8)), requires_grad=True)
    builders = [
        lambda: (Linear(8, 6, rng), lambda m: m(x)),
        lambda: (MLP([8, 9, 4], rng), lambda m: m(x)),
        lambda: (LayerNorm(8), lambda m: m(x)),
        lambda: (MultiHeadSelfAttention(8, 2, rng), lambda m: m(x)),
        lambda: (MultiHeadCrossAttention(8, 2, rng), lambda m: m(x, ctx)),
        lambda: (TransformerBlock(8, 2, rng), lambda m: m(x)),
    ]
    mod, call = builders[layer_idx]()
    params = dict(mod.named_parameters(), x=x, ctx=ctx)
    randomize_zero_init(params, rng)
    assert grad_check(lambda: (call(mod) ** 2).sum(), params) < 1e-4


def test_mixer_block_gradcheck(f64):
    rng = np.random.default_rng(7)
    x = Tensor(rng.normal(size=(2, 6, 8)), requires_grad=True)
    mod = MixerBlock(6, 8, rng)
    params = dict(mod.named_parameters(), x=x)
    randomize_zero_init(params, rng)
    assert grad_check(lambda: (mod(x) ** 2).sum(), params) < 1e-4


def test_attention_key_mask_blocks_masked_keys():
    rng = np.random.default_rng(3)
    attn = MultiHeadSelfAttention(8, 2, rng)
    x = Tensor(rng.normal(size=(1, 5, 8)))
    mask = np.array([[True, True, True, False, False]])
    base = attn(x, key_mask=mask).data
    perturbed = x.data.copy()
    perturbed[0, 3:] += 100.0
    out = attn(Tensor(perturbed), key_mask=mask).data
    assert np.allclose(base[0, :3], out[0, :3])


def test_layer_norm_output_stats():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=(10, 16)) * 5 + 3)
    y = LayerNorm(16)(x).data
    assert np.allclose(y.mean(axis=-1), 0.0, atol=1e-6)
    assert np.allclose(y.std(axis=-1), 1.0, atol=1e-2)


# -- optimizer ---------------------------------------------------------------

def test_adamw_decreases_quadratic():
    w = Tensor(np.array([5.0, -3.0]), requires_grad=True)
    opt = AdamW({"w": w}, lr=0.1)
    losses = []
    for _ in range(200):
        loss = (w * w).sum()
        losses.append(loss.item())
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert losses[-1] < 1e-3 < losses[0]


def test_adamw_weight_decay_is_decoupled():
    """With zero gradient the decoupled decay shrinks weights geometrically."""
    w = Tensor(np.array([2.0]), requires_grad=True)
    opt = AdamW({"w": w}, lr=0.5, weight_decay=0.1)
    loss = (w * 0.0).sum()
    opt.zero_grad()
    loss.backward()
    opt.step()
    assert np.allclose(w.data, 2.0 * (1 - 0.5 * 0.1))


# -- grad_check self-test ----------------------------------------------------

def test_grad_check_flags_wrong_gradient(f64):
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)

    def fn():
        out = (x * x).sum()

        def bad_backward(g):
            return (np.full_like(x.data, 17.0),)

        return Tensor(out.data, requires_grad=True, _parents=(x,),
                      _backward=bad_backward)

    assert grad_check(fn, {"x": x}) > 0.1


# -- checkpoints -------------------------------------------------------------

def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    tensors = {"a.weight": rng.normal(size=(3, 4)),
               "b": rng.normal(size=(7,)).astype(np.float32),
               "scalar": np.array(2.5)}
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, tensors)
    loaded = load_checkpoint(path)
    assert set(loaded) == set(tensors)
    for k in tensors:
        # the format stores float64; float32 values widen exactly
        assert loaded[k].dtype == np.float64
        assert np.array_equal(loaded[k], np.asarray(tensors[k], dtype=np.float64))


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_bytes_deterministic(tmp_path):
    tensors = {"w": np.arange(6.0).reshape(2, 3)}
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(p1, tensors)
    save_checkpoint(p2, tensors)
    assert p1.read_bytes() == p2.read_bytes()


def test_make_rng_streams_disjoint_and_reproducible():
    a1 = make_rng(0, stream=1).standard_normal(8)
    a2 = make_rng(0, stream=1).standard_normal(8)
    b = make_rng(0, stream=2).standard_normal(8)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
