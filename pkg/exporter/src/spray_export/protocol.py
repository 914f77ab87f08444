"""Server side of the framed stdio engine protocol.

Handshake: magic "SPRYv1\\n", u32le class count, u32le activation-channel
count.  Requests: u8 opcode (1 forward, 2 forward_ablated, 255 shutdown) |
u32le ablation count | ids | u32le payload length | TNSR image blob.
Responses: u8 status 0 + three u32le-length-prefixed TNSR blobs (main,
aux, activations), or u8 status 1 + u32le length + UTF-8 message.
"""
from __future__ import annotations

import struct

import numpy as np

from . import tnsr

MAGIC = b"SPRYv1\n"
OP_FORWARD = 1
OP_FORWARD_ABLATED = 2
OP_SHUTDOWN = 255


class ProtocolError(RuntimeError):
    pass


def read_exact(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise ProtocolError(f"stream ended {remaining} bytes short")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def handshake_bytes(num_classes: int, num_channels: int) -> bytes:
    return MAGIC + struct.pack("<2I", num_classes, num_channels)


def read_request(stream):
    """Returns (opcode, frozenset of channel ids, image array or None)."""
    opcode = read_exact(stream, 1)[0]
    (count,) = struct.unpack("<I", read_exact(stream, 4))
    if count > 1_000_000:
        raise ProtocolError(f"implausible ablation count {count}")
    ids = struct.unpack(f"<{count}I", read_exact(stream, 4 * count)) if count else ()
    (length,) = struct.unpack("<I", read_exact(stream, 4))
    image = None
    if length:
        try:
            image = tnsr.decode(read_exact(stream, length))
        except tnsr.FormatError as exc:
            raise ProtocolError(f"undecodable image payload: {exc}") from exc
    return opcode, frozenset(int(i) for i in ids), image


def ok_response(main: np.ndarray, aux: np.ndarray, acts: np.ndarray) -> bytes:
    parts = [struct.pack("<B", 0)]
    for tensor in (main, aux, acts):
        blob = tnsr.encode(tensor)
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    return b"".join(parts)


def error_response(message: str) -> bytes:
    data = message.encode("utf-8")
    return struct.pack("<BI", 1, len(data)) + data
