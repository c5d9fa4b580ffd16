"""Frozen causal-LM content embedding extraction.

Renders each catalog item with the shared prompt template, runs the model
forward (no gradients, weights untouched), mean-pools the final decoder
layer's hidden states over real (non-padding) tokens, and writes the
vectors as an LNEB file.
"""

from dataclasses import dataclass

import numpy as np

from .catalog import load_catalog
from .lneb import write_embeddings
from .prompts import SIX_FIELDS, THREE_FIELDS, render_prompt


class ModelLoadError(RuntimeError):
    pass


@dataclass
class ExtractorConfig:
    model: str                  # HF model name or local path
    catalog: str
    output: str
    batch_size: int = 8
    max_tokens: int = 128       # prompt truncation length
    device: str = "cpu"
    six_fields: bool = False

    def fields(self):
        return SIX_FIELDS if self.six_fields else THREE_FIELDS


def _load_model(name_or_path, device):
    import torch
    from transformers import AutoModelForCausalLM, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(name_or_path)
        model = AutoModelForCausalLM.from_pretrained(name_or_path)
    except Exception as e:
        raise ModelLoadError(f"cannot load model {name_or_path!r}: {e}") from e
    if tokenizer.pad_token is None:
        # padding id is irrelevant for pooling (masked out); reuse an
        # existing token rather than resizing the frozen model
        tokenizer.pad_token = tokenizer.eos_token or tokenizer.convert_ids_to_tokens(0)
    model.eval()
    model.requires_grad_(False)
    model.to(device)
    return tokenizer, model


def _pool_last_layer(model, tokenizer, prompts, max_tokens, device):
    import torch

    enc = tokenizer(prompts, return_tensors="pt", padding=True,
                    truncation=True, max_length=max_tokens)
    enc = {k: v.to(device) for k, v in enc.items()}
    with torch.no_grad():
        out = model(**enc, output_hidden_states=True)
    hidden = out.hidden_states[-1]                      # (B, L, H), final decoder layer
    mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
    summed = (hidden * mask).sum(dim=1)
    counts = mask.sum(dim=1).clamp(min=1.0)
    return (summed / counts).float().cpu().numpy()


def extract(config: ExtractorConfig) -> int:
    """Embed every catalog item; returns the number of records written."""
    import torch

    rows = load_catalog(config.catalog)
    tokenizer, model = _load_model(config.model, config.device)
    dim = int(model.config.hidden_size)
    fields = config.fields()

    records = []
    try:
        for start in range(0, len(rows), config.batch_size):
            chunk = rows[start:start + config.batch_size]
            prompts = [render_prompt(row, fields) for row in chunk]
            pooled = _pool_last_layer(model, tokenizer, prompts, config.max_tokens, config.device)
            for row, vec in zip(chunk, pooled):
                records.append((row["item_id"], np.asarray(vec, dtype=np.float32)))
    except torch.cuda.OutOfMemoryError as e:
        raise RuntimeError(
            f"out of memory at batch size {config.batch_size}; re-run with a smaller --batch-size"
        ) from e

    write_embeddings(config.output, dim, records)
    return len(records)
