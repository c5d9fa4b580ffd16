"""Binary parameter checkpoints.

Layout (little-endian): magic b"LNCK", u32 version, u64 param count,
u32 config length + UTF-8 JSON config, then per parameter:
u32 name length, name bytes, u32 rank, rank x u64 dims, f32 data.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import BadMagicError, BadVersionError, StoreError

MAGIC = b"LNCK"
VERSION = 1


def save_checkpoint(path, params: dict, config: dict | None = None) -> None:
    config_bytes = json.dumps(config or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<Q", len(params)))
        f.write(struct.pack("<I", len(config_bytes)))
        f.write(config_bytes)
        for name, p in params.items():
            arr = np.ascontiguousarray(getattr(p, "data", p), dtype="<f4")
            name_b = name.encode("utf-8")
            f.write(struct.pack("<I", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.tobytes())


def _read(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise StoreError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (config, {name: float32 array})."""
    with open(path, "rb") as f:
        if _read(f, 4, "magic") != MAGIC:
            raise BadMagicError(f"{path}: not a checkpoint file")
        (version,) = struct.unpack("<I", _read(f, 4, "version"))
        if version != VERSION:
            raise BadVersionError(f"{path}: unsupported checkpoint version {version}")
        (count,) = struct.unpack("<Q", _read(f, 8, "param count"))
        (config_len,) = struct.unpack("<I", _read(f, 4, "config length"))
        config = json.loads(_read(f, config_len, "config").decode("utf-8"))
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read(f, 4, "name length"))
            name = _read(f, name_len, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read(f, 4, "rank"))
            dims = struct.unpack(f"<{rank}Q", _read(f, 8 * rank, "dims"))
            n = int(np.prod(dims)) if dims else 1
            data = np.frombuffer(_read(f, 4 * n, f"data for {name}"), dtype="<f4")
            params[name] = data.reshape(dims).copy()
        if f.read(1):
            raise StoreError(f"{path}: trailing bytes after last parameter")
    return config, params
