"""Shared fixtures: a tiny randomly-initialized causal LM saved to disk.

No network: the model is a 2-layer GPT-2 configuration with a word-level
tokenizer built from the fixture prompts. Any causal LM works for the
extractor; the contract under test is prompts, pooling, and the file
format, not embedding quality.
"""

import json
import os
from pathlib import Path

import pytest

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def fixture_catalog():
    return DATA_DIR / "fixture_catalog.tsv"


@pytest.fixture(scope="session")
def golden_prompts():
    with open(DATA_DIR / "golden_prompts.json", encoding="utf-8") as f:
        return json.load(f)


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory, fixture_catalog, golden_prompts):
    import torch
    from tokenizers import Tokenizer, models, pre_tokenizers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    words = set()
    for group in golden_prompts.values():
        for text in group.values():
            words.update(text.split())
    vocab = {"[PAD]": 0, "[UNK]": 1}
    for w in sorted(words):
        vocab[w] = len(vocab)

    tok = Tokenizer(models.WordLevel(vocab, unk_token="[UNK]"))
    tok.pre_tokenizer = pre_tokenizers.WhitespaceSplit()
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=tok, unk_token="[UNK]", pad_token="[PAD]"
    )

    torch.manual_seed(0)
    config = GPT2Config(
        vocab_size=len(vocab), n_positions=64, n_embd=32, n_layer=2, n_head=2,
        bos_token_id=1, eos_token_id=1,
    )
    model = GPT2LMHeadModel(config)

    out = tmp_path_factory.mktemp("tiny-lm")
    tokenizer.save_pretrained(out)
    model.save_pretrained(out)
    return out
