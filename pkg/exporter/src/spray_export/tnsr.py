"""TNSR binary tensor container (independent codec for the exporter side).

Layout: magic "TNSR" | u8 version=1 | u8 rank (2 or 3) | u16 reserved=0 |
rank x u32le extents | f32le payload, row-major.
"""
from __future__ import annotations

import struct

import numpy as np

MAGIC = b"TNSR"
VERSION = 1


class FormatError(ValueError):
    pass


def encode(tensor: np.ndarray) -> bytes:
    t = np.ascontiguousarray(tensor, dtype="<f4")
    if t.ndim not in (2, 3):
        raise FormatError(f"rank must be 2 or 3, got {t.ndim}")
    if any(e <= 0 for e in t.shape):
        raise FormatError(f"extents must be positive, got {t.shape}")
    if not np.isfinite(t).all():
        raise FormatError("payload must be finite")
    header = MAGIC + struct.pack("<BBH", VERSION, t.ndim, 0)
    header += struct.pack(f"<{t.ndim}I", *t.shape)
    return header + t.tobytes()


def decode(blob: bytes) -> np.ndarray:
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise FormatError("not a TNSR blob")
    version, rank, reserved = struct.unpack("<BBH", blob[4:8])
    if version != VERSION or rank not in (2, 3) or reserved != 0:
        raise FormatError(f"unsupported header (version={version}, rank={rank})")
    end = 8 + 4 * rank
    if len(blob) < end:
        raise FormatError("truncated extent table")
    shape = struct.unpack(f"<{rank}I", blob[8:end])
    count = int(np.prod(shape))
    if any(e == 0 for e in shape) or len(blob) - end != 4 * count:
        raise FormatError("payload length disagrees with header")
    return np.frombuffer(blob[end:], dtype="<f4").reshape(shape).astype(np.float32)
