"""scikit-learn style facade over the full pipeline.

TwoTowerRecommender fits on a list of InteractionSequence, embeds users
via transform(), and recommends items via predict()/recommend(). All
hyperparameters live in __init__ so get_params/set_params, clone() and
grid search compose as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .evaluation import GalleryIndex, evaluate, retrieve_topk
from .model import TowerConfig, TwinTowerModel
from .sampling import SamplingConfig
from .training import TrainConfig, train
from .validation import check_provider, check_sequences


class TwoTowerRecommender(BaseEstimator):
    """Learns collaborative user/item embeddings from frozen content vectors.

    Parameters mirror the tower, sampling, and optimizer configs; `provider`
    is the frozen item_id -> content embedding source used for both fitting
    and inference.
    """

    def __init__(self, provider=None, *, d_model=128, n_layers=4, n_heads=4,
                 d_out=64, max_len=128, item_tower_variant="a", max_hist=80,
                 max_tar=40, n_hist=10, n_tar=10, alpha=10.0, beta=10000.0,
                 weighted=True, epochs=10, batch_size=32, tau=0.05, lr=1e-3,
                 weight_decay=0.01, warmup_steps=10, seed=0):
        self.provider = provider
        self.d_model = d_model
        self.n_layers = n_layers
        self.n_heads = n_heads
        self.d_out = d_out
        self.max_len = max_len
        self.item_tower_variant = item_tower_variant
        self.max_hist = max_hist
        self.max_tar = max_tar
        self.n_hist = n_hist
        self.n_tar = n_tar
        self.alpha = alpha
        self.beta = beta
        self.weighted = weighted
        self.epochs = epochs
        self.batch_size = batch_size
        self.tau = tau
        self.lr = lr
        self.weight_decay = weight_decay
        self.warmup_steps = warmup_steps
        self.seed = seed

    def _tower_config(self, provider) -> TowerConfig:
        d_out = self.d_out
        if self.item_tower_variant == "c":
            d_out = provider.dim  # similarity space must match raw content
        return TowerConfig(
            d_content=provider.dim, d_model=self.d_model, n_layers=self.n_layers,
            n_heads=self.n_heads, d_out=d_out, max_len=self.max_len,
            item_tower_variant=self.item_tower_variant,
        )

    def fit(self, X, y=None, item_ids=None):
        """Train the towers on interaction sequences.

        item_ids fixes the recommendation gallery; defaults to everything
        the provider can enumerate.
        """
        provider = check_provider(self.provider)
        seqs = check_sequences(X, require_history=True)
        self.model_ = TwinTowerModel(self._tower_config(provider), seed=self.seed)
        sampling = SamplingConfig(max_hist=self.max_hist, max_tar=self.max_tar,
                                  n_hist=self.n_hist, n_tar=self.n_tar,
                                  alpha=self.alpha, beta=self.beta, weighted=self.weighted)
        train_cfg = TrainConfig(epochs=self.epochs, batch_size=self.batch_size,
                                tau=self.tau, lr=self.lr, weight_decay=self.weight_decay,
                                warmup_steps=self.warmup_steps)
        self.train_log_ = train(self.model_, seqs, provider, sampling, train_cfg, seed=self.seed)
        self.gallery_ids_ = list(item_ids) if item_ids is not None else provider.item_ids()
        self.index_ = GalleryIndex(self.gallery_ids_, self.model_.embed_gallery(provider, self.gallery_ids_))
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("call fit() before using the estimator")

    def transform(self, X) -> np.ndarray:
        """User embeddings, one unit-norm row per input sequence."""
        self._check_fitted()
        seqs = check_sequences(X)
        return np.stack([self.model_.embed_user(s.item_ids(), self.provider) for s in seqs])

    def recommend(self, X, k: int = 10) -> list[list[int]]:
        """Top-k gallery item ids per sequence, best first."""
        self._check_fitted()
        seqs = check_sequences(X)
        out = []
        for seq in seqs:
            query = self.model_.embed_user(seq.item_ids(), self.provider)
            out.append(retrieve_topk(query, self.index_, k, seq.user_id).item_ids)
        return out

    def predict(self, X) -> np.ndarray:
        """Single best next-item id per sequence."""
        return np.array([ids[0] for ids in self.recommend(X, k=1)], dtype=np.uint64)

    def score(self, X, y=None) -> float:
        """Leave-one-out Recall@10 over sequences with >= 3 events."""
        self._check_fitted()
        report = evaluate(self.model_, check_sequences(X), self.provider,
                          self.gallery_ids_, protocol="leave_one_out", ks=(10,))
        return report["metrics"]["recall@10"]

    def item_embeddings(self, item_ids) -> np.ndarray:
        self._check_fitted()
        return self.model_.embed_gallery(self.provider, list(item_ids))
