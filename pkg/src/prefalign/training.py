"""Contrastive training: batch assembly, the all-action loss, and the loop.

Each user contributes n_hist sampled history positions and n_tar sampled
target positions; every (history, target) pairing is a positive, and the
target embeddings of the other users in the batch are the negatives.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .errors import BatchTooSmallError, ConfigError, MissingItemError
from .model import TwinTowerModel
from .nn import tensor as T
from .nn.optim import AdamW, cosine_lr
from .nn.tensor import Tensor
from .sampling import SamplingConfig, position_weights, stage1_sample, stage2_select, user_rng

NEG_BIAS = -1e9


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    tau: float = 0.05
    lr: float = 1e-3
    weight_decay: float = 0.01
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    warmup_steps: int = 10

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (in-batch negatives)")
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs, "batch_size": self.batch_size, "tau": self.tau,
            "lr": self.lr, "weight_decay": self.weight_decay, "betas": list(self.betas),
            "eps": self.eps, "warmup_steps": self.warmup_steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d)


@dataclass
class TrainBatch:
    user_ids: list[int]
    hist_items: list[list[int]]      # stage-1 sampled, chronological
    tar_items: list[list[int]]
    hist_positions: list[np.ndarray]  # stage-2 selected indices into the above
    tar_positions: list[np.ndarray]

    @property
    def size(self) -> int:
        return len(self.user_ids)


def assemble_batch(sequences, cfg: SamplingConfig, seed: int, epoch: int) -> TrainBatch:
    """Sample one batch. Stage 1 runs before stage 2 on a per-user stream,
    so toggling `weighted` changes stage-2 selections but never stage-1."""
    hist_items, tar_items = [], []
    stage1_rngs = []
    user_ids = []
    for seq in sequences:
        rng = user_rng(seed, seq.user_id, epoch)
        hist = stage1_sample(seq.history_items(), cfg.max_hist, rng)
        tar = stage1_sample(seq.target_items(), cfg.max_tar, rng)
        if not hist or not tar:
            raise ValueError(f"user {seq.user_id} has an empty history or target segment")
        user_ids.append(seq.user_id)
        hist_items.append(hist)
        tar_items.append(tar)
        stage1_rngs.append(rng)

    # Rectangular batches: users shorter than n_hist/n_tar clip the whole
    # batch's sample counts to the feasible minimum.
    n_h = min(cfg.n_hist, min(len(h) for h in hist_items))
    n_t = min(cfg.n_tar, min(len(t) for t in tar_items))
    hist_positions, tar_positions = [], []
    for hist, tar, rng in zip(hist_items, tar_items, stage1_rngs):
        hist_positions.append(stage2_select(len(hist), n_h, position_weights(len(hist), cfg), rng))
        tar_positions.append(stage2_select(len(tar), n_t, position_weights(len(tar), cfg), rng))
    return TrainBatch(user_ids, hist_items, tar_items, hist_positions, tar_positions)


def all_action_contrastive_loss(user_embs: Tensor, item_embs: Tensor, tau: float,
                                item_ids=None) -> Tensor:
    """InfoNCE over every (history position, target position) positive pair.

    user_embs: (B, N_h, d) unit rows; item_embs: (B, N_t, d) unit rows.
    For the pair (b, h, t) the denominator holds the positive plus the
    target embeddings of the *other* users; negatives sharing the
    positive's item_id are masked out when item_ids (B, N_t) is given.
    """
    if user_embs.ndim != 3 or item_embs.ndim != 3:
        raise ValueError("expected (B, N_h, d) user and (B, N_t, d) item embeddings")
    bsz, n_h, dim = user_embs.shape
    bsz_i, n_t, dim_i = item_embs.shape
    if bsz != bsz_i or dim != dim_i:
        raise ValueError(f"incompatible shapes {user_embs.shape} / {item_embs.shape}")
    if bsz < 2:
        raise BatchTooSmallError("need at least 2 users for in-batch negatives")
    if tau <= 0:
        raise ValueError("tau must be > 0")

    flat_u = T.reshape(user_embs, (bsz * n_h, dim))
    flat_i = T.reshape(item_embs, (bsz * n_t, dim))
    logits = T.mul(T.matmul(flat_u, T.transpose(flat_i, (1, 0))), 1.0 / float(tau))

    # Additive mask over candidate columns, per positive (b, t):
    # keep the positive itself and other users' targets; drop the same
    # user's other targets and, with ids, same-id columns elsewhere.
    owner = np.repeat(np.arange(bsz), n_t)                      # column -> owning user
    col = np.arange(bsz * n_t)
    same_user = owner[None, None, :] == np.arange(bsz)[:, None, None]
    is_self = col[None, None, :] == (np.arange(bsz)[:, None, None] * n_t
                                     + np.arange(n_t)[None, :, None])
    excluded = same_user & ~is_self
    if item_ids is not None:
        ids = np.asarray(item_ids)
        if ids.shape != (bsz, n_t):
            raise ValueError(f"item_ids shape {ids.shape}, expected ({bsz}, {n_t})")
        same_id = ids.reshape(-1)[None, None, :] == ids[:, :, None]
        excluded |= same_id & ~same_user
    bias = np.where(excluded, NEG_BIAS, 0.0).astype(user_embs.dtype)  # (B, N_t, B*N_t)

    expanded = T.add(
        T.reshape(logits, (bsz, n_h, 1, bsz * n_t)),
        Tensor(bias[:, None, :, :]),
    )  # (B, N_h, N_t, B*N_t)
    lse = T.logsumexp(expanded, axis=-1)

    pos_rows = np.repeat(np.arange(bsz * n_h), n_t)
    pos_cols = np.tile(
        (np.arange(bsz)[:, None] * n_t + np.arange(n_t)[None, :]).reshape(bsz, 1, n_t),
        (1, n_h, 1),
    ).reshape(-1)
    positives = T.reshape(T.take_pairs(logits, pos_rows, pos_cols), (bsz, n_h, n_t))
    return T.mean_(T.add(lse, T.mul(positives, -1.0)))


def _batch_embeddings(model: TwinTowerModel, batch: TrainBatch, provider, step: int):
    """Run both towers over the stage-1 sequences and gather stage-2 rows."""
    user_rows, item_rows = [], []
    for n, uid in enumerate(batch.user_ids):
        try:
            hist_content = model.content_tensor(batch.hist_items[n], provider)
            tar_content = model.content_tensor(batch.tar_items[n], provider)
        except MissingItemError as e:
            raise MissingItemError(e.item_id, context=f"user {uid}, step {step}") from e
        user_rows.append(model.forward_user(hist_content, positions=batch.hist_positions[n]))
        item_rows.append(model.forward_item(tar_content, positions=batch.tar_positions[n]))
    user_embs = T.stack(user_rows)            # (B, n_h, d)
    item_embs = T.stack(item_rows)            # (B, n_t, d)
    ids = np.array(
        [[batch.tar_items[n][p] for p in batch.tar_positions[n]] for n in range(batch.size)],
        dtype=np.uint64,
    )
    return user_embs, item_embs, ids


def train(model: TwinTowerModel, sequences, provider, sampling_cfg: SamplingConfig,
          train_cfg: TrainConfig, seed: int = 0, log_path=None,
          mask_same_id: bool = True) -> list[dict]:
    """Train in place; returns the per-epoch log (also written as JSON lines)."""
    sequences = list(sequences)
    if not sequences:
        raise ValueError("empty training dataset")
    if max(sampling_cfg.max_hist, sampling_cfg.max_tar) > model.config.max_len:
        raise ConfigError(
            f"stage-1 caps ({sampling_cfg.max_hist}/{sampling_cfg.max_tar}) exceed the "
            f"model's max_len ({model.config.max_len})"
        )
    usable = [s for s in sequences if s.history and s.target]
    if len(usable) < 2:
        raise ValueError("need at least 2 users with non-empty history and target")

    opt = AdamW(model.params, base_lr=train_cfg.lr, weight_decay=train_cfg.weight_decay,
                betas=train_cfg.betas, eps=train_cfg.eps)
    steps_per_epoch = max(1, len(usable) // train_cfg.batch_size)
    total_steps = train_cfg.epochs * steps_per_epoch
    shuffle_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 0x5AFE))))

    log: list[dict] = []
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        step = 0
        for epoch in range(train_cfg.epochs):
            order = shuffle_rng.permutation(len(usable))
            epoch_losses = []
            epoch_start = time.monotonic()
            lr = train_cfg.lr
            for b in range(steps_per_epoch):
                members = [usable[i] for i in order[b * train_cfg.batch_size:(b + 1) * train_cfg.batch_size]]
                if len(members) < 2:
                    continue
                batch = assemble_batch(members, sampling_cfg, seed, epoch)
                user_embs, item_embs, ids = _batch_embeddings(model, batch, provider, step)
                loss = all_action_contrastive_loss(
                    user_embs, item_embs, train_cfg.tau,
                    item_ids=ids if mask_same_id else None,
                )
                opt.zero_grad()
                loss.backward()
                lr = cosine_lr(step, total_steps, train_cfg.lr, train_cfg.warmup_steps)
                opt.step(lr)
                epoch_losses.append(loss.item())
                step += 1
            entry = {
                "epoch": epoch,
                "loss": float(np.mean(epoch_losses)) if epoch_losses else None,
                "lr": lr,
                "wallclock_s": round(time.monotonic() - epoch_start, 3),
            }
            log.append(entry)
            if log_file:
                log_file.write(json.dumps(entry) + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()
    return log
