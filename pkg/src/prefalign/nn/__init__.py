from .tensor import (
    Tensor,
    add,
    gather_rows,
    gelu,
    l2_normalize,
    layer_norm,
    logsumexp,
    matmul,
    mean_,
    mul,
    no_grad,
    parameter,
    reshape,
    softmax,
    stack,
    sum_,
    take_pairs,
    transpose,
)
from .layers import (
    FeedForward,
    LayerNorm,
    Linear,
    MultiHeadAttention,
    TransformerBlock,
    causal_mask,
    cross_entropy_with_logits,
    diagonal_mask,
    mask_to_bias,
    masked_attention,
)
from .optim import AdamW, cosine_lr
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "add", "gather_rows", "gelu", "l2_normalize", "layer_norm",
    "logsumexp", "matmul", "mean_", "mul", "no_grad", "parameter", "reshape",
    "softmax", "stack", "sum_", "take_pairs", "transpose",
    "FeedForward", "LayerNorm", "Linear", "MultiHeadAttention",
    "TransformerBlock", "causal_mask", "cross_entropy_with_logits",
    "diagonal_mask", "mask_to_bias", "masked_attention",
    "AdamW", "cosine_lr", "load_checkpoint", "save_checkpoint",
]
