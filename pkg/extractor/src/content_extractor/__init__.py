"""Frozen causal-LM content embedding extractor.

Reads an item catalog (TSV), renders the shared concise prompt per item,
mean-pools the final decoder layer over real tokens, and writes the
binary LNEB embedding file the recommendation trainer consumes.
"""

from .catalog import CatalogSchemaError, load_catalog
from .extract import ExtractorConfig, ModelLoadError, extract
from .lneb import read_embeddings, write_embeddings
from .prompts import SIX_FIELDS, THREE_FIELDS, render_prompt

__version__ = "0.1.0"

__all__ = [
    "CatalogSchemaError", "load_catalog",
    "ExtractorConfig", "ModelLoadError", "extract",
    "read_embeddings", "write_embeddings",
    "SIX_FIELDS", "THREE_FIELDS", "render_prompt",
    "__version__",
]
