import struct

import numpy as np
import pytest

from spray_export import tnsr
from spray_export.protocol import handshake_bytes, read_request


def test_tnsr_header_golden_bytes():
    t = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    blob = tnsr.encode(t)
    assert blob[:4] == b"TNSR"
    assert blob[4] == 1          # version
    assert blob[5] == 2          # rank
    assert blob[6:8] == b"\x00\x00"
    assert blob[8:16] == struct.pack("<2I", 2, 2)
    assert blob[16:] == struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)


def test_tnsr_roundtrip():
    rng = np.random.default_rng(0)
    for shape in ((2, 3), (4, 5, 6)):
        t = rng.normal(size=shape).astype(np.float32)
        assert np.array_equal(tnsr.decode(tnsr.encode(t)), t)


def test_tnsr_rejects_malformed():
    t = np.ones((2, 2), dtype=np.float32)
    blob = tnsr.encode(t)
    with pytest.raises(tnsr.FormatError):
        tnsr.decode(b"XXXX" + blob[4:])
    with pytest.raises(tnsr.FormatError):
        tnsr.decode(blob[:-4])
    with pytest.raises(tnsr.FormatError):
        tnsr.encode(np.full((2, 2), np.nan, dtype=np.float32))


def test_handshake_golden_bytes():
    assert handshake_bytes(7, 8) == b"SPRYv1\n" + struct.pack("<2I", 7, 8)


def test_request_decoding_golden_frame():
    import io

    image = np.arange(12, dtype=np.float32).reshape(3, 2, 2)
    payload = tnsr.encode(image)
    frame = (struct.pack("<B", 2) + struct.pack("<I", 2)
             + struct.pack("<2I", 1, 4) + struct.pack("<I", len(payload))
             + payload)
    opcode, channels, back = read_request(io.BytesIO(frame))
    assert opcode == 2
    assert channels == frozenset({1, 4})
    assert np.array_equal(back, image)
