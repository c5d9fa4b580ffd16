"""Item text -> frozen content embeddings.

The real content encoder is an external tool writing the shared binary
embedding format; this module owns the prompt template, a deterministic
pseudo-embedder for encoder-free runs, pooling, and the provider
abstraction the trainer consumes. Providers are frozen: nothing here
ever mutates stored vectors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .data import Item, ItemCatalog
from .errors import (
    BadMagicError,
    BadVersionError,
    DimMismatchError,
    DuplicateIdError,
    EmptyInputError,
    MissingItemError,
    StoreError,
)

MISSING_FIELD_TOKEN = "unknown"
THREE_FIELDS = ("title", "category", "brand")
SIX_FIELDS = ("title", "category", "brand", "price", "keywords", "attributes")


@dataclass(frozen=True)
class PromptTemplate:
    """Concise `name: value` item description, comma-joined in field order."""

    fields: tuple[str, ...] = THREE_FIELDS

    def render(self, item: Item) -> str:
        extras = item.extras_dict()
        parts = []
        for name in self.fields:
            value = getattr(item, name) if name in ("title", "category", "brand") else extras.get(name, "")
            parts.append(f"{name}: {value if value else MISSING_FIELD_TOKEN}")
        return ", ".join(parts)


DEFAULT_TEMPLATE = PromptTemplate()


def compose_prompt(item: Item, template: PromptTemplate = DEFAULT_TEMPLATE) -> str:
    return template.render(item)


def average_pool(hidden_states) -> np.ndarray:
    """Arithmetic mean over token positions (rows)."""
    arr = np.asarray(hidden_states, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise EmptyInputError(f"expected a non-empty L x D matrix, got shape {arr.shape}")
    return arr.mean(axis=0)


_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _splitmix64(state: int):
    while True:
        state = (state + 0x9E3779B97F4B7C15) & _MASK64
        x = state
        x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield x ^ (x >> 31)


def pseudo_embed(text: str, dim: int) -> np.ndarray:
    """Deterministic stand-in for a content encoder.

    Bit-exact everywhere: FNV-1a-64 of the UTF-8 bytes seeds a splitmix64
    stream; each draw maps to [-1, 1) via its top 53 bits; the vector is
    then L2-normalized and rounded to float32.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    stream = _splitmix64(fnv1a64(text.encode("utf-8")))
    vec = np.array(
        [((next(stream) >> 11) / 2.0**53) * 2.0 - 1.0 for _ in range(dim)],
        dtype=np.float64,
    )
    vec /= np.sqrt(np.sum(vec * vec))
    return vec.astype(np.float32)


class EmbeddingProvider:
    """item_id -> frozen content vector. Lookups are deterministic."""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def lookup(self, item_id: int) -> np.ndarray:
        raise NotImplementedError

    def batch(self, item_ids) -> np.ndarray:
        if len(item_ids) == 0:
            return np.zeros((0, self.dim), dtype=np.float32)
        return np.stack([self.lookup(i) for i in item_ids])

    def item_ids(self) -> list[int]:
        raise NotImplementedError(f"{type(self).__name__} cannot enumerate its items")


class ArrayProvider(EmbeddingProvider):
    """In-memory provider over a fixed id -> row table."""

    def __init__(self, ids, matrix):
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or len(ids) != matrix.shape[0]:
            raise DimMismatchError(f"ids/matrix mismatch: {len(ids)} vs {matrix.shape}")
        self._ids = [int(i) for i in ids]
        self._rows = {}
        for n, item_id in enumerate(self._ids):
            if item_id in self._rows:
                raise DuplicateIdError(item_id)
            self._rows[item_id] = n
        self._matrix = matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[1]

    def lookup(self, item_id: int) -> np.ndarray:
        row = self._rows.get(int(item_id))
        if row is None:
            raise MissingItemError(item_id)
        return self._matrix[row]

    def batch(self, item_ids) -> np.ndarray:
        rows = []
        for i in item_ids:
            row = self._rows.get(int(i))
            if row is None:
                raise MissingItemError(i)
            rows.append(row)
        return self._matrix[np.asarray(rows, dtype=np.intp)]

    def item_ids(self) -> list[int]:
        return list(self._ids)


class PseudoProvider(EmbeddingProvider):
    """Computes pseudo-embeddings of composed prompts on the fly."""

    def __init__(self, catalog: ItemCatalog, dim: int, template: PromptTemplate = DEFAULT_TEMPLATE):
        self._catalog = catalog
        self._dim = dim
        self._template = template

    @property
    def dim(self) -> int:
        return self._dim

    def lookup(self, item_id: int) -> np.ndarray:
        try:
            item = self._catalog.get(item_id)
        except KeyError:
            raise MissingItemError(item_id) from None
        return pseudo_embed(self._template.render(item), self._dim)

    def item_ids(self) -> list[int]:
        return self._catalog.ids()


# Binary embedding file: magic, u32 version=1, u32 dim, u64 count,
# then count records of (u64 item_id, dim x f32). Little-endian throughout.
MAGIC = b"LNEB"
VERSION = 1


def store_write(path, dim: int, records) -> None:
    """Write (item_id, vector) records; vectors must be finite, length dim."""
    records = list(records)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIQ", VERSION, dim, len(records)))
        for item_id, vec in records:
            arr = np.ascontiguousarray(vec, dtype="<f4")
            if arr.shape != (dim,):
                raise DimMismatchError(f"record for item {item_id} has shape {arr.shape}, want ({dim},)")
            if not np.all(np.isfinite(arr)):
                raise StoreError(f"record for item {item_id} contains non-finite values")
            f.write(struct.pack("<Q", int(item_id)))
            f.write(arr.tobytes())


def store_open(path) -> ArrayProvider:
    """Load an embedding file fully into memory and wrap it as a provider."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MAGIC:
            raise BadMagicError(f"{path}: bad magic {magic!r}")
        header = f.read(16)
        if len(header) != 16:
            raise StoreError(f"{path}: truncated header")
        version, dim, count = struct.unpack("<IIQ", header)
        if version != VERSION:
            raise BadVersionError(f"{path}: unsupported version {version}")
        if dim < 1:
            raise DimMismatchError(f"{path}: dim {dim} must be >= 1")
        record = struct.Struct(f"<Q{dim}f")
        ids = np.empty(count, dtype=np.uint64)
        matrix = np.empty((count, dim), dtype=np.float32)
        for n in range(count):
            buf = f.read(record.size)
            if len(buf) != record.size:
                raise StoreError(f"{path}: truncated at record {n} of {count}")
            fields = record.unpack(buf)
            ids[n] = fields[0]
            matrix[n] = np.frombuffer(buf, dtype="<f4", count=dim, offset=8)
        if f.read(1):
            raise StoreError(f"{path}: trailing bytes after {count} records")
    return ArrayProvider([int(i) for i in ids], matrix)
