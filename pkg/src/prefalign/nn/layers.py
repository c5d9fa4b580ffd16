"""Transformer building blocks on top of the autodiff core.

Pre-LayerNorm blocks, multi-head attention with an arbitrary boolean mask,
and a softmax cross-entropy head. Parameters are plain Tensors collected
through named_params() so the optimizer and checkpoint code can treat a
model as a flat name -> array mapping.
"""

from __future__ import annotations

import numpy as np

from ..errors import AllMaskedRowError, ShapeMismatchError
from . import tensor as T
from .tensor import Tensor

# Large negative bias used to zero out masked attention logits. exp() of it
# underflows to exactly 0.0 in both float32 and float64, which is what makes
# the causality guarantees bitwise rather than approximate.
MASK_BIAS = -1e9


def causal_mask(n: int) -> np.ndarray:
    """allowed[t, s] iff s <= t."""
    return np.tril(np.ones((n, n), dtype=bool))


def diagonal_mask(n: int) -> np.ndarray:
    """allowed[t, s] iff s == t: every position attends only to itself."""
    return np.eye(n, dtype=bool)


def mask_to_bias(mask: np.ndarray, dtype) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    for t in range(mask.shape[0]):
        if not mask[t].any():
            raise AllMaskedRowError(t)
    return np.where(mask, 0.0, MASK_BIAS).astype(dtype)


def masked_attention(q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray) -> Tensor:
    """Scaled dot-product attention restricted to mask[t, s] == True.

    q, k, v have shape (..., L, d_head); the mask is a shared (L, L)
    boolean matrix. Disallowed positions get exactly zero weight.
    """
    if q.shape != k.shape or k.shape != v.shape:
        raise ShapeMismatchError(f"attention shapes {q.shape}/{k.shape}/{v.shape}")
    d_head = q.shape[-1]
    bias = mask_to_bias(mask, q.dtype)
    scores = T.matmul(q, _swap_last(k))
    scores = T.mul(scores, 1.0 / float(np.sqrt(d_head)))
    scores = T.add(scores, Tensor(bias))
    return T.matmul(T.softmax(scores, axis=-1), v)


def _swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return T.transpose(x, axes)


class Linear:
    def __init__(self, w: Tensor, b: Tensor):
        self.w = w
        self.b = b

    @classmethod
    def create(cls, rng, d_in: int, d_out: int, std: float = 0.02, bias_fill: float = 0.0, dtype=np.float32):
        w = T.parameter(rng.normal(0.0, std, size=(d_in, d_out)), dtype=dtype)
        b = T.parameter(np.full(d_out, bias_fill), dtype=dtype)
        return cls(w, b)

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.w), self.b)

    def named_params(self, prefix: str):
        yield f"{prefix}.w", self.w
        yield f"{prefix}.b", self.b


class LayerNorm:
    def __init__(self, gamma: Tensor, beta: Tensor, eps: float = 1e-5):
        self.gamma = gamma
        self.beta = beta
        self.eps = eps

    @classmethod
    def create(cls, d: int, dtype=np.float32):
        return cls(T.parameter(np.ones(d), dtype=dtype), T.parameter(np.zeros(d), dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)

    def named_params(self, prefix: str):
        yield f"{prefix}.gamma", self.gamma
        yield f"{prefix}.beta", self.beta


class MultiHeadAttention:
    def __init__(self, n_heads: int, wq: Linear, wk: Linear, wv: Linear, wo: Linear):
        self.n_heads = n_heads
        self.wq, self.wk, self.wv, self.wo = wq, wk, wv, wo

    @classmethod
    def create(cls, rng, d_model: int, n_heads: int, dtype=np.float32):
        if d_model % n_heads != 0:
            raise ShapeMismatchError(f"d_model {d_model} not divisible by n_heads {n_heads}")
        mk = lambda: Linear.create(rng, d_model, d_model, dtype=dtype)
        return cls(n_heads, mk(), mk(), mk(), mk())

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        seq_len, d_model = x.shape
        d_head = d_model // self.n_heads

        def split(t: Tensor) -> Tensor:
            # (L, d_model) -> (heads, L, d_head)
            return T.transpose(T.reshape(t, (seq_len, self.n_heads, d_head)), (1, 0, 2))

        out = masked_attention(split(self.wq(x)), split(self.wk(x)), split(self.wv(x)), mask)
        out = T.reshape(T.transpose(out, (1, 0, 2)), (seq_len, d_model))
        return self.wo(out)

    def named_params(self, prefix: str):
        yield from self.wq.named_params(f"{prefix}.wq")
        yield from self.wk.named_params(f"{prefix}.wk")
        yield from self.wv.named_params(f"{prefix}.wv")
        yield from self.wo.named_params(f"{prefix}.wo")


class FeedForward:
    def __init__(self, fc1: Linear, fc2: Linear):
        self.fc1 = fc1
        self.fc2 = fc2

    @classmethod
    def create(cls, rng, d_model: int, hidden_mult: int = 4, dtype=np.float32):
        return cls(
            Linear.create(rng, d_model, hidden_mult * d_model, dtype=dtype),
            Linear.create(rng, hidden_mult * d_model, d_model, dtype=dtype),
        )

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.gelu(self.fc1(x)))

    def named_params(self, prefix: str):
        yield from self.fc1.named_params(f"{prefix}.fc1")
        yield from self.fc2.named_params(f"{prefix}.fc2")


class TransformerBlock:
    """Pre-LN residual block: x + attn(ln(x)), then x + ff(ln(x))."""

    def __init__(self, ln1: LayerNorm, attn: MultiHeadAttention, ln2: LayerNorm, ff: FeedForward):
        self.ln1, self.attn, self.ln2, self.ff = ln1, attn, ln2, ff

    @classmethod
    def create(cls, rng, d_model: int, n_heads: int, dtype=np.float32):
        return cls(
            LayerNorm.create(d_model, dtype=dtype),
            MultiHeadAttention.create(rng, d_model, n_heads, dtype=dtype),
            LayerNorm.create(d_model, dtype=dtype),
            FeedForward.create(rng, d_model, dtype=dtype),
        )

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        x = T.add(x, self.attn(self.ln1(x), mask))
        return T.add(x, self.ff(self.ln2(x)))

    def named_params(self, prefix: str):
        yield from self.ln1.named_params(f"{prefix}.ln1")
        yield from self.attn.named_params(f"{prefix}.attn")
        yield from self.ln2.named_params(f"{prefix}.ln2")
        yield from self.ff.named_params(f"{prefix}.ff")


def cross_entropy_with_logits(logits: Tensor, targets) -> Tensor:
    """Mean softmax cross-entropy; targets are class indices per row."""
    targets = np.asarray(targets, dtype=np.intp)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeMismatchError(f"cross entropy shapes {logits.shape} / {targets.shape}")
    lse = T.logsumexp(logits, axis=-1)
    picked = T.take_pairs(logits, np.arange(logits.shape[0]), targets)
    return T.mean_(T.add(lse, T.mul(picked, -1.0)))
