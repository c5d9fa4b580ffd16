"""prefalign: twin-tower recommendation from frozen content embeddings.

A content-to-collaborative alignment model: a frozen per-item content
embedding source, a causal-attention transformer trained with an
all-action contrastive loss, exact top-k retrieval evaluation, and a
scikit-learn style estimator facade.
"""

from .content import (
    DEFAULT_TEMPLATE,
    EmbeddingProvider,
    PromptTemplate,
    PseudoProvider,
    average_pool,
    compose_prompt,
    pseudo_embed,
    store_open,
    store_write,
)
from .data import (
    InteractionSequence,
    Item,
    ItemCatalog,
    load_catalog,
    load_interactions,
    split_leave_one_out,
)
from .estimator import TwoTowerRecommender
from .evaluation import evaluate, evaluate_unaligned, retrieve_topk
from .model import TowerConfig, TwinTowerModel
from .sampling import SamplingConfig, recency_weights, stage1_sample, stage2_select
from .training import TrainConfig, all_action_contrastive_loss, train

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_TEMPLATE", "EmbeddingProvider", "PromptTemplate", "PseudoProvider",
    "average_pool", "compose_prompt", "pseudo_embed", "store_open", "store_write",
    "InteractionSequence", "Item", "ItemCatalog", "load_catalog",
    "load_interactions", "split_leave_one_out",
    "TwoTowerRecommender",
    "evaluate", "evaluate_unaligned", "retrieve_topk",
    "TowerConfig", "TwinTowerModel",
    "SamplingConfig", "recency_weights", "stage1_sample", "stage2_select",
    "TrainConfig", "all_action_contrastive_loss", "train",
    "__version__",
]
