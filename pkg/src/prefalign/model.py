"""Twin-tower model: content adaptor, causal transformer, projection head.

One parameter set serves both towers. The user tower always runs with a
causal mask; the item tower has three variants:

  "a" -- identical computation to the user tower (causal over the target
         sequence),
  "b" -- same weights but a diagonal mask and position-0 embedding, so
         every item is encoded independently of its neighbours,
  "c" -- no parameters at all: the raw content embedding is the item
         embedding (L2-normalized so dot products stay cosines).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimMismatchError, MissingItemError, SeqTooLongError
from .nn import layers as L
from .nn import tensor as T
from .nn.tensor import Tensor, no_grad

VARIANTS = ("a", "b", "c")

INIT_STD = 0.02


@dataclass
class TowerConfig:
    d_content: int
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    d_out: int = 64
    max_len: int = 128
    item_tower_variant: str = "a"
    normalize_content_targets: bool = True
    id_vocab: tuple[int, ...] | None = None  # set -> trainable ID table replaces frozen content

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.item_tower_variant not in VARIANTS:
            raise ConfigError(f"item_tower_variant must be one of {VARIANTS}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.d_out < 1:
            raise ConfigError("d_out must be >= 1")
        if self.max_len < 1:
            raise ConfigError("max_len must be >= 1")
        if self.item_tower_variant == "c" and self.d_out != self.d_content:
            raise ConfigError(
                f"variant 'c' compares user embeddings to raw content: d_out ({self.d_out}) "
                f"must equal d_content ({self.d_content})"
            )

    def to_dict(self) -> dict:
        return {
            "d_content": self.d_content,
            "d_model": self.d_model,
            "n_layers": self.n_layers,
            "n_heads": self.n_heads,
            "d_out": self.d_out,
            "max_len": self.max_len,
            "item_tower_variant": self.item_tower_variant,
            "normalize_content_targets": self.normalize_content_targets,
            "id_vocab": list(self.id_vocab) if self.id_vocab is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TowerConfig":
        d = dict(d)
        if d.get("id_vocab") is not None:
            d["id_vocab"] = tuple(d["id_vocab"])
        return cls(**d)


# Full-scale backbone (BERT-base shape, 64-dim output head).
FULL_SCALE = dict(d_model=768, n_layers=12, n_heads=12, d_out=64, max_len=512)


class TwinTowerModel:
    def __init__(self, config: TowerConfig, seed: int = 0, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        c = config
        self.adaptor = L.Linear.create(rng, c.d_content, c.d_model, std=INIT_STD, dtype=dtype)
        self.pos = T.parameter(rng.normal(0.0, INIT_STD, size=(c.max_len, c.d_model)), dtype=dtype)
        self.blocks = [L.TransformerBlock.create(rng, c.d_model, c.n_heads, dtype=dtype) for _ in range(c.n_layers)]
        self.final_ln = L.LayerNorm.create(c.d_model, dtype=dtype)
        self.proj = L.Linear.create(rng, c.d_model, c.d_out, std=INIT_STD, dtype=dtype)
        self.id_table = None
        self._id_rows: dict[int, int] | None = None
        if c.id_vocab is not None:
            self.id_table = T.parameter(rng.normal(0.0, INIT_STD, size=(len(c.id_vocab), c.d_content)), dtype=dtype)
            self._id_rows = {int(i): n for n, i in enumerate(c.id_vocab)}
        self.params = dict(self._named_params())

    def _named_params(self):
        yield from self.adaptor.named_params("adaptor")
        yield "pos", self.pos
        for n, block in enumerate(self.blocks):
            yield from block.named_params(f"blocks.{n}")
        yield from self.final_ln.named_params("final_ln")
        yield from self.proj.named_params("proj")
        if self.id_table is not None:
            yield "id_table", self.id_table

    def content_tensor(self, item_ids, provider) -> Tensor:
        """Content rows for item ids: frozen provider lookup, or a gather
        from the trainable ID table when the model owns one (gradients then
        flow into the table)."""
        if self.id_table is not None:
            rows = []
            for i in item_ids:
                row = self._id_rows.get(int(i))
                if row is None:
                    raise MissingItemError(i, context="trainable ID table")
                rows.append(row)
            return T.gather_rows(self.id_table, np.asarray(rows, dtype=np.intp))
        return Tensor(provider.batch(item_ids).astype(self.dtype, copy=False))

    def _check_seq(self, content: Tensor):
        if content.ndim != 2 or content.shape[1] != self.config.d_content:
            raise DimMismatchError(
                f"content shape {content.shape}, expected (L, {self.config.d_content})"
            )
        if content.shape[0] > self.config.max_len:
            raise SeqTooLongError(content.shape[0], self.config.max_len)
        if content.shape[0] < 1:
            raise DimMismatchError("empty content sequence")

    def _encode(self, content: Tensor, mask: np.ndarray, pos_idx: np.ndarray,
                positions=None) -> Tensor:
        x = T.add(self.adaptor(content), T.gather_rows(self.pos, pos_idx))
        for block in self.blocks:
            x = block(x, mask)
        x = self.final_ln(x)
        out = T.l2_normalize(self.proj(x))
        if positions is not None:
            out = T.gather_rows(out, np.asarray(positions, dtype=np.intp))
        return out

    def forward_user(self, content, positions=None) -> Tensor:
        """Causal encoding of a content sequence; row t depends only on
        rows <= t. Returns unit-norm rows at the requested positions
        (default all)."""
        content = content if isinstance(content, Tensor) else Tensor(np.asarray(content, dtype=self.dtype))
        self._check_seq(content)
        n = content.shape[0]
        return self._encode(content, L.causal_mask(n), np.arange(n), positions)

    def forward_item(self, content, variant: str | None = None, positions=None) -> Tensor:
        variant = self.config.item_tower_variant if variant is None else variant
        if variant not in VARIANTS:
            raise ConfigError(f"unknown item tower variant {variant!r}")
        content = content if isinstance(content, Tensor) else Tensor(np.asarray(content, dtype=self.dtype))
        self._check_seq(content)
        n = content.shape[0]
        if variant == "a":
            return self._encode(content, L.causal_mask(n), np.arange(n), positions)
        if variant == "b":
            return self._encode(content, L.diagonal_mask(n), np.zeros(n, dtype=np.intp), positions)
        out = T.l2_normalize(content) if self.config.normalize_content_targets else content
        if positions is not None:
            out = T.gather_rows(out, np.asarray(positions, dtype=np.intp))
        return out

    def infer_item_embedding(self, content_vec, variant: str | None = None) -> np.ndarray:
        """Single-item inference; equals the item tower on a length-1 sequence."""
        vec = np.asarray(content_vec, dtype=self.dtype).reshape(1, -1)
        with no_grad():
            return self.forward_item(vec, variant=variant).data[0]

    def embed_gallery(self, provider, item_ids) -> np.ndarray:
        """Item embeddings for a gallery, chunked to respect max_len.

        Variants "a" and "b" coincide on single items, so chunks run under a
        diagonal mask at position 0, which encodes every item independently.
        """
        out = np.empty((len(item_ids), self.config.d_out), dtype=np.float32)
        chunk = self.config.max_len
        with no_grad():
            for start in range(0, len(item_ids), chunk):
                ids = item_ids[start:start + chunk]
                content = self.content_tensor(ids, provider)
                if self.config.item_tower_variant == "c":
                    emb = self.forward_item(content)
                else:
                    emb = self._encode(content, L.diagonal_mask(content.shape[0]),
                                       np.zeros(content.shape[0], dtype=np.intp))
                out[start:start + len(ids)] = emb.data
        return out

    def embed_user(self, item_ids, provider) -> np.ndarray:
        """User embedding from a history: tower output at the last position."""
        ids = list(item_ids)[-self.config.max_len:]
        with no_grad():
            content = self.content_tensor(ids, provider)
            return self.forward_user(content, positions=[len(ids) - 1]).data[0]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        if set(state) != set(self.params):
            missing = set(self.params) - set(state)
            extra = set(state) - set(self.params)
            raise DimMismatchError(f"parameter names differ (missing={missing}, extra={extra})")
        for k, p in self.params.items():
            arr = np.asarray(state[k], dtype=self.dtype)
            if arr.shape != p.data.shape:
                raise DimMismatchError(f"{k}: checkpoint shape {arr.shape} != model {p.data.shape}")
            p.data[...] = arr
