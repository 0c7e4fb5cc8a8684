"""Binary PPM (P6) image files, the package's only image format.

Only maxval 255 is supported.  Pixels load as a (1, 3, h, w) float32
tensor in [0, 255]; saving rounds to nearest and clips, so loading and
re-saving an integer-valued tensor is the identity.  Parse errors carry
the byte offset where things went wrong.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .autodiff import Tensor

__all__ = ["load_image", "save_image", "PpmError"]


class PpmError(ValueError):
    """Raised for malformed or unsupported PPM files."""


def _scan_token(blob: bytes, off: int, what: str) -> tuple[bytes, int]:
    """Next header token, skipping whitespace and # comments."""
    n = len(blob)
    while off < n:
        b = blob[off]
        if b in b" \t\r\n":
            off += 1
        elif b == ord("#"):
            while off < n and blob[off] not in b"\r\n":
                off += 1
        else:
            break
    if off >= n:
        raise PpmError(f"unexpected end of header at byte {off}: missing {what}")
    start = off
    while off < n and blob[off] not in b" \t\r\n":
        off += 1
    return blob[start:off], off


def _scan_int(blob: bytes, off: int, what: str) -> tuple[int, int]:
    token, end = _scan_token(blob, off, what)
    if not token.isdigit():
        raise PpmError(f"bad {what} at byte {end - len(token)}: {token!r} is not a number")
    return int(token), end


def load_image(path) -> Tensor:
    blob = Path(path).read_bytes()
    magic, off = _scan_token(blob, 0, "magic")
    if magic != b"P6":
        raise PpmError(f"not a binary PPM: magic {magic!r} at byte 0 (expected b'P6')")
    width, off = _scan_int(blob, off, "width")
    height, off = _scan_int(blob, off, "height")
    maxval, off = _scan_int(blob, off, "maxval")
    if maxval != 255:
        raise PpmError(f"unsupported maxval {maxval} (only 255)")
    if width < 1 or height < 1:
        raise PpmError(f"bad image size {width}x{height}")
    if off >= len(blob) or blob[off] not in b" \t\r\n":
        raise PpmError(f"missing whitespace after maxval at byte {off}")
    off += 1  # exactly one whitespace byte separates header from data
    need = 3 * width * height
    have = len(blob) - off
    if have < need:
        raise PpmError(
            f"pixel data truncated at byte {off}: expected {need} bytes, found {have}"
        )
    if have > need:
        raise PpmError(f"{have - need} trailing bytes after pixel data (byte {off + need})")
    pixels = np.frombuffer(blob, dtype=np.uint8, count=need, offset=off)
    arr = pixels.reshape(height, width, 3).transpose(2, 0, 1)[np.newaxis]
    return Tensor(arr.astype(np.float32))


def save_image(t: Tensor, path) -> None:
    n, c, h, w = t.shape
    if n != 1 or c != 3:
        raise ValueError(f"save_image: need a (1, 3, h, w) tensor, got {t.shape}")
    arr = np.rint(np.clip(t.data, 0.0, 255.0)).astype(np.uint8)
    body = arr[0].transpose(1, 2, 0).tobytes()
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + body)
