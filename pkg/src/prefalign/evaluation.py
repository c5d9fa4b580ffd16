"""Offline retrieval evaluation.

Exact (non-approximate) top-K over the full gallery, single-target
leave-one-out metrics (NDCG@K, Recall@K, MRR) and industry-style
multi-target hit/recall. Ties always break toward the smaller item_id so
rankings are a fixed total order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import split_leave_one_out
from .errors import EmptyIndexError, EmptyTargetsError, TooShortError


@dataclass
class RankingResult:
    user_id: int
    item_ids: list[int]   # best first
    scores: list[float]   # non-increasing


class GalleryIndex:
    """All item embeddings, scored by dot product against a query."""

    def __init__(self, ids, matrix):
        self.ids = np.asarray(ids, dtype=np.uint64)
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if self.ids.ndim != 1 or self.matrix.ndim != 2 or len(self.ids) != len(self.matrix):
            raise ValueError("ids and matrix must be parallel")
        if len(self.ids) == 0:
            raise EmptyIndexError("empty gallery")
        self._row_of = {int(i): n for n, i in enumerate(self.ids)}

    def __len__(self):
        return len(self.ids)

    def scores(self, query: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(query, dtype=np.float32)

    def row_of(self, item_id: int) -> int:
        return self._row_of[int(item_id)]


def retrieve_topk(query: np.ndarray, index: GalleryIndex, k: int, user_id: int = 0) -> RankingResult:
    """Exact top-k by score, ties broken by ascending item_id; k clamps."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = index.scores(query)
    k = min(k, len(index))
    # lexsort: last key is primary, so order by (-score, item_id)
    order = np.lexsort((index.ids, -scores.astype(np.float64)))[:k]
    return RankingResult(
        user_id=user_id,
        item_ids=[int(i) for i in index.ids[order]],
        scores=[float(s) for s in scores[order]],
    )


def target_rank(query: np.ndarray, index: GalleryIndex, target_id: int) -> int:
    """1-based rank of target under the same total order as retrieve_topk."""
    scores = index.scores(query)
    row = index.row_of(target_id)
    s = scores[row]
    better = int(np.sum(scores > s))
    tied_before = int(np.sum((scores == s) & (index.ids < np.uint64(target_id))))
    return better + tied_before + 1


def ndcg_at_k(rank: int | None, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if rank is None or rank > k:
        return 0.0
    return 1.0 / math.log2(rank + 1)


def recall_at_k(rank: int | None, k: int) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    return 1.0 if rank is not None and rank <= k else 0.0


def reciprocal_rank(rank: int | None) -> float:
    return 0.0 if rank is None else 1.0 / rank


def hit_recall_multi(targets, topk_ids, k: int) -> tuple[int, float]:
    """Per-user hit indicator and coverage of the target set in the top k."""
    targets = set(int(t) for t in targets)
    if not targets:
        raise EmptyTargetsError("user has no target items")
    got = len(targets & set(int(i) for i in topk_ids[:k]))
    return (1 if got else 0), got / len(targets)


def _report(protocol, ks, metrics, n_users, n_items) -> dict:
    return {
        "protocol": protocol,
        "K": list(ks),
        "metrics": metrics,
        "n_users": n_users,
        "n_items": n_items,
    }


def evaluate(model, sequences, provider, gallery_ids, protocol: str = "leave_one_out",
             ks=(10,), per_user_out=None) -> dict:
    """Score a trained model.

    leave_one_out: the user embedding comes from the tower over the train
    prefix (all events but the last two), the held-out last item is the
    target, the gallery is every item in gallery_ids.

    multi_target: the user embedding comes from the history segment and all
    target-segment items count; reports mean hit@K / recall@K.
    """
    gallery_ids = list(gallery_ids)
    index = GalleryIndex(gallery_ids, model.embed_gallery(provider, gallery_ids))
    user_embed = lambda items: model.embed_user(items, provider)
    return _evaluate_with(user_embed, index, sequences, protocol, ks, per_user_out)


def evaluate_unaligned(sequences, provider, gallery_ids, protocol: str = "leave_one_out",
                       ks=(10,)) -> dict:
    """No-alignment baseline: the user is the mean of their history's raw
    content embeddings and items are raw content embeddings (both unit
    normalized). What retrieval looks like without any trained mapping."""
    gallery_ids = list(gallery_ids)
    matrix = provider.batch(gallery_ids).astype(np.float64)
    matrix /= np.maximum(np.linalg.norm(matrix, axis=1, keepdims=True), 1e-12)
    index = GalleryIndex(gallery_ids, matrix.astype(np.float32))

    def user_embed(items):
        vecs = provider.batch(items).astype(np.float64)
        mean = vecs.mean(axis=0)
        return (mean / max(np.linalg.norm(mean), 1e-12)).astype(np.float32)

    return _evaluate_with(user_embed, index, sequences, protocol, ks, None)


def _evaluate_with(user_embed, index, sequences, protocol, ks, per_user_out) -> dict:
    ks = sorted(set(int(k) for k in ks))
    if protocol == "leave_one_out":
        ranks, skipped = [], 0
        for seq in sequences:
            try:
                train_items, _valid, test_item = split_leave_one_out(seq)
            except TooShortError:
                skipped += 1
                continue
            rank = target_rank(user_embed(train_items), index, test_item)
            ranks.append((seq.user_id, test_item, rank))
        if not ranks:
            raise ValueError("no user had >= 3 events to evaluate")
        metrics = {}
        for k in ks:
            metrics[f"ndcg@{k}"] = float(np.mean([ndcg_at_k(r, k) for _, _, r in ranks]))
            metrics[f"recall@{k}"] = float(np.mean([recall_at_k(r, k) for _, _, r in ranks]))
        metrics["mrr"] = float(np.mean([reciprocal_rank(r) for _, _, r in ranks]))
        if per_user_out is not None:
            per_user_out.extend(ranks)
        return _report(protocol, ks, metrics, len(ranks), len(index))

    if protocol == "multi_target":
        hits = {k: [] for k in ks}
        recalls = {k: [] for k in ks}
        n_users = 0
        max_k = max(ks)
        for seq in sequences:
            if not seq.history or not seq.target:
                continue
            topk = retrieve_topk(user_embed(seq.history_items()), index, max_k, seq.user_id)
            targets = set(seq.target_items())
            for k in ks:
                hit, rec = hit_recall_multi(targets, topk.item_ids, k)
                hits[k].append(hit)
                recalls[k].append(rec)
            n_users += 1
        if n_users == 0:
            raise ValueError("no user had both history and target events")
        metrics = {}
        for k in ks:
            metrics[f"hit@{k}"] = float(np.mean(hits[k]))
            metrics[f"recall@{k}"] = float(np.mean(recalls[k]))
        return _report(protocol, ks, metrics, n_users, len(index))

    raise ValueError(f"unknown protocol {protocol!r}")
