"""Binary weight checkpoints.

Layout (all integers little-endian):

* magic ``ADNW`` (4 bytes), format version u32, tensor count u32;
* per tensor: name length u16, UTF-8 name, rank u8, extents u32 each,
  then the float64 payload in C order.

Round-trips are bit-exact, so a save/load pair preserves training state
down to the last mantissa bit.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["save_weights", "load_weights", "WEIGHTS_MAGIC", "WEIGHTS_VERSION"]

WEIGHTS_MAGIC = b"ADNW"
WEIGHTS_VERSION = 1
_MAX_RANK = 4


def save_weights(path, state: dict[str, np.ndarray]) -> None:
    path = Path(path)
    parts = [WEIGHTS_MAGIC, struct.pack("<II", WEIGHTS_VERSION, len(state))]
    for name, arr in state.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        if arr.ndim > _MAX_RANK:
            raise ValueError(f"tensor {name!r} has rank {arr.ndim}, max is {_MAX_RANK}")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name!r}")
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    path.write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.path = path
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise ValueError(f"{self.path}: truncated while reading {what} "
                             f"at byte offset {self.pos}")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk


def load_weights(path) -> dict[str, np.ndarray]:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4, "magic") != WEIGHTS_MAGIC:
        raise ValueError(f"{path}: not an ADNW weights file")
    version, count = struct.unpack("<II", r.take(8, "header"))
    if version != WEIGHTS_VERSION:
        raise ValueError(f"{path}: unsupported weights format version {version}")
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", r.take(2, "name length"))
        name = r.take(name_len, "tensor name").decode("utf-8")
        (rank,) = struct.unpack("<B", r.take(1, f"rank of {name!r}"))
        if rank > _MAX_RANK:
            raise ValueError(f"{path}: tensor {name!r} has rank {rank}, max is {_MAX_RANK}")
        extents = struct.unpack(f"<{rank}I", r.take(4 * rank, f"extents of {name!r}"))
        n_items = int(np.prod(extents, dtype=np.int64)) if rank else 1
        raw = r.take(8 * n_items, f"data of {name!r}")
        state[name] = np.frombuffer(raw, dtype="<f8").reshape(extents).astype(np.float64)
    if r.pos != len(r.blob):
        raise ValueError(f"{path}: {len(r.blob) - r.pos} trailing bytes after last tensor")
    return state
