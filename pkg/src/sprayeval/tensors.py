"""Dense float32 tensors, the portable TNSR/LMSK binary formats, and the
numeric kernels (bilinear resize, softmax, argmax, percentile, min-max
normalization) every other module builds on.

A "tensor" throughout this package is a plain numpy float32 array of rank 2
(height, width) or rank 3 (channels, height, width), row-major, with every
value finite.  A "label mask" is a rank-2 uint8 array of class ids.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, TensorCorruptionError, TensorFormatError

TNSR_MAGIC = b"TNSR"
LMSK_MAGIC = b"LMSK"
FORMAT_VERSION = 1

NUM_CLASSES = 7


def as_tensor(data, shape=None) -> np.ndarray:
    """Coerce ``data`` to a validated float32 tensor of rank 2 or 3."""
    t = np.asarray(data, dtype=np.float32)
    if shape is not None:
        t = t.reshape(shape)
    validate_tensor(t)
    return t


def validate_tensor(t: np.ndarray) -> None:
    if not isinstance(t, np.ndarray) or t.dtype != np.float32:
        raise ContractError(f"expected a float32 array, got {type(t).__name__}"
                            f"{'' if not isinstance(t, np.ndarray) else f' of dtype {t.dtype}'}")
    if t.ndim not in (2, 3):
        raise ContractError(f"expected rank 2 or 3, got rank {t.ndim}")
    if any(e <= 0 for e in t.shape):
        raise ContractError(f"extents must be positive, got {t.shape}")
    if not np.isfinite(t).all():
        raise ContractError("tensor holds NaN or Inf values")


def validate_mask(m: np.ndarray, num_classes: int = NUM_CLASSES) -> None:
    if not isinstance(m, np.ndarray) or m.dtype != np.uint8 or m.ndim != 2:
        raise ContractError("label mask must be a rank-2 uint8 array")
    if m.size and int(m.max()) >= num_classes:
        raise ContractError(f"label {int(m.max())} outside [0, {num_classes})")


# ---------------------------------------------------------------------------
# TNSR / LMSK container format
#
# TNSR: magic "TNSR" | u8 version=1 | u8 rank (2 or 3) | u16 reserved=0 |
#       rank x u32le extents | product(extents) x f32le payload.
# LMSK: magic "LMSK" | u8 version=1 | u8 rank=2 | u16 reserved=0 |
#       2 x u32le extents | height*width x u8 labels.
# ---------------------------------------------------------------------------

def tensor_to_bytes(t: np.ndarray) -> bytes:
    validate_tensor(t)
    header = TNSR_MAGIC + struct.pack("<BBH", FORMAT_VERSION, t.ndim, 0)
    header += struct.pack(f"<{t.ndim}I", *t.shape)
    return header + np.ascontiguousarray(t, dtype="<f4").tobytes()


def tensor_from_bytes(blob: bytes) -> np.ndarray:
    shape, payload = _decode_header(blob, TNSR_MAGIC, ranks=(2, 3))
    count = int(np.prod(shape))
    if len(payload) != 4 * count:
        raise TensorCorruptionError(
            f"payload holds {len(payload) // 4} floats, header promises {count}")
    t = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(np.float32)
    if not np.isfinite(t).all():
        raise TensorCorruptionError("payload holds non-finite values")
    return t


def mask_to_bytes(m: np.ndarray) -> bytes:
    validate_mask(m, num_classes=256)
    header = LMSK_MAGIC + struct.pack("<BBH", FORMAT_VERSION, 2, 0)
    header += struct.pack("<2I", *m.shape)
    return header + np.ascontiguousarray(m, dtype=np.uint8).tobytes()


def mask_from_bytes(blob: bytes) -> np.ndarray:
    shape, payload = _decode_header(blob, LMSK_MAGIC, ranks=(2,))
    count = int(np.prod(shape))
    if len(payload) != count:
        raise TensorCorruptionError(
            f"payload holds {len(payload)} labels, header promises {count}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(shape).copy()


def _decode_header(blob: bytes, magic: bytes, ranks) -> tuple[tuple[int, ...], bytes]:
    if len(blob) < 8:
        raise TensorFormatError("file shorter than the 8-byte header")
    if blob[:4] != magic:
        raise TensorFormatError(f"bad magic {blob[:4]!r}, expected {magic!r}")
    version, rank, reserved = struct.unpack("<BBH", blob[4:8])
    if version != FORMAT_VERSION:
        raise TensorFormatError(f"unsupported version {version}")
    if rank not in ranks:
        raise TensorFormatError(f"unsupported rank {rank}")
    if reserved != 0:
        raise TensorFormatError("reserved header bytes must be zero")
    end = 8 + 4 * rank
    if len(blob) < end:
        raise TensorCorruptionError("truncated extent table")
    shape = struct.unpack(f"<{rank}I", blob[8:end])
    if any(e == 0 for e in shape):
        raise TensorCorruptionError(f"zero extent in shape {shape}")
    return shape, blob[end:]


def write_tensor(t: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(tensor_to_bytes(t))


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return tensor_from_bytes(fh.read())


def write_mask(m: np.ndarray, path) -> None:
    with open(path, "wb") as fh:
        fh.write(mask_to_bytes(m))


def read_mask(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return mask_from_bytes(fh.read())


# ---------------------------------------------------------------------------
# Numeric kernels
# ---------------------------------------------------------------------------

def bilinear_resize(t: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize the spatial axes with bilinear interpolation (half-pixel
    centers, i.e. the align-corners=false convention).

    Accepts (H, W) or (C, H, W); returns the same rank.  Each output value
    is a convex combination of its four nearest inputs, so constant maps
    stay exactly constant and same-size calls return an exact copy.
    """
    if out_h < 1 or out_w < 1:
        raise ContractError(f"target size must be positive, got {out_h}x{out_w}")
    squeeze = t.ndim == 2
    a = t[None, :, :] if squeeze else t
    validate_tensor(a)
    _, h, w = a.shape
    if (out_h, out_w) == (h, w):
        out = a.copy()
        return out[0] if squeeze else out

    ys = np.clip((np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0).astype(np.float32)[None, :, None]
    wx = (xs - x0).astype(np.float32)[None, None, :]

    v00 = a[:, y0][:, :, x0]
    v01 = a[:, y0][:, :, x1]
    v10 = a[:, y1][:, :, x0]
    v11 = a[:, y1][:, :, x1]
    # lerp-of-lerps keeps constant inputs bit-exact
    top = v00 + wx * (v01 - v00)
    bot = v10 + wx * (v11 - v10)
    out = (top + wy * (bot - top)).astype(np.float32)
    return out[0] if squeeze else out


def softmax_channels(t: np.ndarray) -> np.ndarray:
    """Per-pixel softmax over the channel axis, max-subtracted for stability."""
    validate_tensor(t)
    if t.ndim != 3:
        raise ContractError("softmax_channels expects a (C, H, W) tensor")
    z = t - t.max(axis=0, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=0, keepdims=True)).astype(np.float32)


def argmax_mask(t: np.ndarray) -> np.ndarray:
    """Per-pixel index of the maximum channel; ties go to the lowest id."""
    validate_tensor(t)
    if t.ndim != 3:
        raise ContractError("argmax_mask expects a (C, H, W) tensor")
    if t.shape[0] > 256:
        raise ContractError("label masks carry at most 256 classes")
    return t.argmax(axis=0).astype(np.uint8)


def percentile(values, p: float) -> float:
    """Linear-interpolation percentile (rank = p/100 * (n-1)) of a sequence."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("percentile of an empty sequence")
    if not 0.0 <= p <= 100.0:
        raise ValueError(f"percentile must lie in [0, 100], got {p}")
    return float(np.percentile(v, p, method="linear"))


def minmax_normalize(t: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; a constant input maps to all zeros."""
    validate_tensor(t)
    lo = float(t.min())
    hi = float(t.max())
    if hi == lo:
        return np.zeros_like(t)
    return ((t - lo) / (hi - lo)).astype(np.float32)


# ---------------------------------------------------------------------------
# Class table for the 7-class post-spray dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassTable:
    """Id/name pairs plus the sprayed-class -> base-class pairing."""
    names: tuple[str, ...]
    sprayed_pair: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ContractError("class names must be unique")
        for sprayed, base in self.sprayed_pair.items():
            if not (0 <= sprayed < len(self.names) and 0 <= base < len(self.names)):
                raise ContractError(f"sprayed pair ({sprayed}, {base}) out of range")
            if base == 0:
                raise ContractError("sprayed classes never pair with background")
        bases = list(self.sprayed_pair.values())
        if len(set(bases)) != len(bases):
            raise ContractError("sprayed_pair must be injective")

    @property
    def num_classes(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        return self.names.index(name)

    def name_of(self, class_id: int) -> str:
        return self.names[class_id]

    def base_of(self, sprayed_id: int) -> int:
        return self.sprayed_pair[sprayed_id]

    @property
    def sprayed_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.sprayed_pair))

    @property
    def foreground_ids(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.num_classes) if i != 0)


DEFAULT_CLASSES = ClassTable(
    names=("background", "lettuce", "chickweed", "meadowgrass",
           "sprayed_lettuce", "sprayed_chickweed", "sprayed_meadowgrass"),
    sprayed_pair={4: 1, 5: 2, 6: 3},
)
