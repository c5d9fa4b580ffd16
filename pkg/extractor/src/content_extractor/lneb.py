"""LNEB embedding file writer (and a reader for self-checks).

Layout, little-endian: magic b"LNEB", u32 version=1, u32 dim, u64 count,
then count records of (u64 item_id, dim x f32). Writing is atomic via a
temp file renamed into place.
"""

import os
import struct
import tempfile

import numpy as np

MAGIC = b"LNEB"
VERSION = 1


def write_embeddings(path, dim: int, records) -> None:
    records = list(records)
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp_path = tempfile.mkstemp(prefix=".lneb-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<IIQ", VERSION, dim, len(records)))
            for item_id, vec in records:
                arr = np.ascontiguousarray(vec, dtype="<f4")
                if arr.shape != (dim,):
                    raise ValueError(f"item {item_id}: vector shape {arr.shape}, want ({dim},)")
                if not np.all(np.isfinite(arr)):
                    raise ValueError(f"item {item_id}: non-finite values")
                f.write(struct.pack("<Q", int(item_id)))
                f.write(arr.tobytes())
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def read_embeddings(path):
    """Returns (dim, {item_id: float32 vector})."""
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: bad magic")
        version, dim, count = struct.unpack("<IIQ", f.read(16))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        out = {}
        record = struct.Struct(f"<Q{dim}f")
        for _ in range(count):
            buf = f.read(record.size)
            if len(buf) != record.size:
                raise ValueError(f"{path}: truncated file")
            item_id = struct.unpack_from("<Q", buf)[0]
            out[item_id] = np.frombuffer(buf, dtype="<f4", count=dim, offset=8).copy()
    return dim, out
