"""Two-stage sequence sampling for training batches.

Stage 1 truncates long histories by uniform sampling without replacement
(order preserved), keeping the modelled interests unbiased. Stage 2 picks
the positions that enter the loss, weighted toward recent items.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadHyperparamsError, ConfigError, CountExceedsLenError


@dataclass
class SamplingConfig:
    max_hist: int = 80
    max_tar: int = 40
    n_hist: int = 10
    n_tar: int = 10
    alpha: float = 10.0
    beta: float = 10000.0
    weighted: bool = True

    def __post_init__(self):
        if not 1 <= self.n_hist <= self.max_hist:
            raise ConfigError(f"need 1 <= n_hist ({self.n_hist}) <= max_hist ({self.max_hist})")
        if not 1 <= self.n_tar <= self.max_tar:
            raise ConfigError(f"need 1 <= n_tar ({self.n_tar}) <= max_tar ({self.max_tar})")
        if not self.beta > self.alpha > 1.0:
            raise ConfigError(f"need beta ({self.beta}) > alpha ({self.alpha}) > 1")

    def to_dict(self) -> dict:
        return {
            "max_hist": self.max_hist, "max_tar": self.max_tar,
            "n_hist": self.n_hist, "n_tar": self.n_tar,
            "alpha": self.alpha, "beta": self.beta, "weighted": self.weighted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingConfig":
        return cls(**d)


def stage1_sample(items, max_len: int, rng: np.random.Generator) -> list:
    """Uniform subsample of at most max_len items, original order kept."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    items = list(items)
    if len(items) <= max_len:
        return items
    idx = np.sort(rng.choice(len(items), size=max_len, replace=False))
    return [items[i] for i in idx]


def recency_weights(n: int, alpha: float, beta: float) -> np.ndarray:
    """Normalized position weights, increasing toward the most recent item.

    Position i of n gets log(alpha + i * (beta - alpha) / (n - 1)) scaled by
    the maximum, so the last position always weighs 1. Ratios of logs make
    the result independent of the logarithm base.
    """
    if not beta > alpha > 1.0:
        raise BadHyperparamsError(f"need beta ({beta}) > alpha ({alpha}) > 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    if n == 1:
        return np.array([1.0])
    i = np.arange(n, dtype=np.float64)
    w = np.log(alpha + i * (beta - alpha) / (n - 1))
    return w / w[-1]


def stage2_select(seq_len: int, count: int, weights, rng: np.random.Generator) -> np.ndarray:
    """Weighted sampling of `count` positions without replacement.

    Sequential draws, renormalizing the remaining weights after each; one
    uniform variate per draw (inverse CDF), so two runs with different
    weights consume identical generator state. Returns sorted indices.
    """
    if count > seq_len:
        raise CountExceedsLenError(f"count {count} > sequence length {seq_len}")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (seq_len,) or np.any(weights <= 0):
        raise ValueError("weights must be positive and match seq_len")
    remaining = list(range(seq_len))
    w = weights.copy()
    picked = []
    for _ in range(count):
        probs = w / w.sum()
        u = rng.random()
        j = int(np.searchsorted(np.cumsum(probs), u, side="right"))
        j = min(j, len(remaining) - 1)  # guard u == 1.0 - eps edge
        picked.append(remaining.pop(j))
        w = np.delete(w, j)
    return np.array(sorted(picked), dtype=np.intp)


def position_weights(n: int, cfg: SamplingConfig) -> np.ndarray:
    """Stage-2 weights for a stage-1 sequence of length n."""
    if cfg.weighted:
        return recency_weights(n, cfg.alpha, cfg.beta)
    return np.ones(n, dtype=np.float64)


def user_rng(seed: int, user_id: int, epoch: int) -> np.random.Generator:
    """Deterministic per-user substream (safe under parallel batch assembly)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed ^ user_id, epoch))))
