"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np

from .content import EmbeddingProvider
from .data import InteractionSequence
from .errors import MissingItemError


def check_sequences(X, require_history: bool = False):
    """Validate and materialize a collection of interaction sequences."""
    seqs = list(X)
    if not seqs:
        raise ValueError("expected at least one interaction sequence")
    for n, seq in enumerate(seqs):
        if not isinstance(seq, InteractionSequence):
            raise TypeError(f"element {n} is {type(seq).__name__}, expected InteractionSequence")
        if not seq.events:
            raise ValueError(f"user {seq.user_id} has no events")
        if require_history and not (seq.history and seq.target):
            raise ValueError(f"user {seq.user_id} needs non-empty history and target segments")
    return seqs


def check_provider(provider, item_ids=None) -> EmbeddingProvider:
    if not isinstance(provider, EmbeddingProvider):
        raise TypeError(f"provider is {type(provider).__name__}, expected an EmbeddingProvider")
    if item_ids is not None:
        missing = []
        for i in item_ids:
            try:
                provider.lookup(i)
            except MissingItemError:
                missing.append(int(i))
            if len(missing) >= 5:
                break
        if missing:
            raise MissingItemError(missing[0], context=f"{len(missing)}+ items not covered by provider")
    return provider


def check_embedding_matrix(matrix, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(matrix, dtype=np.float32)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D embedding matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise ValueError(f"embedding dim {arr.shape[1]} != expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding matrix contains non-finite values")
    return arr
