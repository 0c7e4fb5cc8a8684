"""Binary checkpoint serialization for parameter stores.

Layout, all integers little-endian uint32:

    magic "SGENCKPT" | version | entry count
    per entry: name length | UTF-8 name | four dims | raw float32 data

Tensors are stored as little-endian float32, so a save/load round trip is
bit-exact for float32 parameters.  Loading validates sizes as it walks
the file and reports the byte offset and entry name on any corruption.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .model import ParamStore

__all__ = ["save_checkpoint", "load_checkpoint", "CheckpointError", "MAGIC", "VERSION"]

MAGIC = b"SGENCKPT"
VERSION = 1

_MAX_NAME = 4096  # sanity bound; corrupt length fields fail fast


class CheckpointError(ValueError):
    """Raised for malformed, truncated, or version-mismatched checkpoint files."""


def save_checkpoint(params: ParamStore, path) -> None:
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, tensor in params.items():
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<4I", *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path) -> ParamStore:
    """Parse a checkpoint into a fresh ParamStore of float32 leaf tensors."""
    blob = Path(path).read_bytes()
    off = 0

    def need(count: int, what: str) -> bytes:
        nonlocal off
        if off + count > len(blob):
            raise CheckpointError(
                f"checkpoint truncated at byte {off}: needed {count} bytes for {what},"
                f" file has {len(blob) - off} left"
            )
        piece = blob[off : off + count]
        off += count
        return piece

    if need(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError(f"bad checkpoint magic at byte 0: expected {MAGIC!r}")
    version, count = struct.unpack("<II", need(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")

    store = ParamStore()
    for index in range(count):
        entry_off = off
        (name_len,) = struct.unpack("<I", need(4, f"entry {index} name length"))
        if name_len == 0 or name_len > _MAX_NAME:
            raise CheckpointError(
                f"entry {index} at byte {entry_off}: implausible name length {name_len}"
            )
        try:
            name = need(name_len, f"entry {index} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"entry {index} at byte {entry_off}: name is not UTF-8") from exc
        dims = struct.unpack("<4I", need(16, f"entry {name!r} dims"))
        size = 1
        for d in dims:
            size *= d
        raw = need(4 * size, f"entry {name!r} data ({dims})")
        data = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        store.add(name, Tensor(data, requires_grad=True))
    if off != len(blob):
        raise CheckpointError(
            f"{len(blob) - off} trailing bytes after the last entry (byte {off})"
        )
    return store
