"""Inference contract, the deterministic built-in toy segmentation model,
a memoizing engine wrapper, and the framed stdio protocol for external
model processes.
"""
from __future__ import annotations

import hashlib
import shlex
import struct
import subprocess
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Protocol, runtime_checkable

import numpy as np

from .errors import ContractError, EngineLostError, TransportError
from .tensors import tensor_from_bytes, tensor_to_bytes, validate_tensor


@dataclass
class ModelOutput:
    """One forward pass: main logits, auxiliary logits, backbone activations."""
    main: np.ndarray          # (C, H, W) logits at input resolution
    aux: np.ndarray           # (C, Ha, Wa) auxiliary-head logits, any resolution
    activations: np.ndarray   # (K, Hf, Wf) final backbone feature maps

    def __post_init__(self):
        for t in (self.main, self.aux, self.activations):
            validate_tensor(t)
            if t.ndim != 3:
                raise ContractError("model outputs must be rank-3 tensors")
        if self.main.shape[0] != self.aux.shape[0]:
            raise ContractError(
                f"main has {self.main.shape[0]} classes but aux has {self.aux.shape[0]}")


@dataclass(frozen=True)
class EngineDescriptor:
    num_classes: int
    num_channels: int
    name: str


@runtime_checkable
class InferenceEngine(Protocol):
    """Behavioral contract every engine satisfies.

    ``forward`` must be deterministic, and ``forward_ablated`` with an empty
    channel set must equal ``forward``.
    """

    def forward(self, image: np.ndarray) -> ModelOutput: ...

    def forward_ablated(self, image: np.ndarray, channels: Iterable[int]) -> ModelOutput: ...

    def descriptor(self) -> EngineDescriptor: ...


def _check_ablation(channels: Iterable[int], num_channels: int) -> frozenset[int]:
    ids = frozenset(int(c) for c in channels)
    for c in ids:
        if not 0 <= c < num_channels:
            raise ContractError(f"ablation channel {c} outside [0, {num_channels})")
    return ids


# ---------------------------------------------------------------------------
# splitmix64 weight generation
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1


def splitmix64(state: int):
    """Infinite stream of splitmix64 outputs seeded by ``state``."""
    s = state & _MASK64
    while True:
        s = (s + 0x9E3779B97F4A7C15) & _MASK64
        z = s
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


def uniform_weights(seed: int, count: int) -> np.ndarray:
    """``count`` floats in [-0.5, 0.5) generated from a splitmix64 stream."""
    gen = splitmix64(seed)
    raw = np.fromiter((next(gen) for _ in range(count)), dtype=np.uint64, count=count)
    return ((raw >> np.uint64(11)) * np.float64(2.0 ** -53) - 0.5).astype(np.float32)


# ---------------------------------------------------------------------------
# Built-in toy fully-convolutional model
# ---------------------------------------------------------------------------

def _conv_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Unpadded 3x3 convolution: x (Cin, H, W), w (Cout, Cin, 3, 3)."""
    windows = np.lib.stride_tricks.sliding_window_view(x, (3, 3), axis=(1, 2))
    return np.einsum("ihwkl,oikl->ohw", windows, w, optimize=True).astype(np.float32)


class ToyFcnEngine:
    """Deterministic bias-free toy FCN for desk-scale evaluation.

    Architecture: valid conv3x3 (3 -> 8) + ReLU, with a 1x1 auxiliary head
    (8 -> C) branching off; then valid conv3x3 (8 -> K=8) + ReLU giving the
    activation maps; a 1x1 main head (8 -> C) whose output is bilinearly
    resized back to the input resolution.  All weights come from a
    splitmix64 stream over ``seed``, so outputs are reproducible anywhere.
    """

    K = 8

    def __init__(self, seed: int, num_classes: int = 7):
        self.seed = int(seed)
        self.num_classes = int(num_classes)
        c = self.num_classes
        counts = [8 * 3 * 3 * 3, c * 8, self.K * 8 * 3 * 3, c * self.K]
        flat = uniform_weights(self.seed, sum(counts))
        offs = np.cumsum([0] + counts)
        self.w_stem = flat[offs[0]:offs[1]].reshape(8, 3, 3, 3)
        self.w_aux = flat[offs[1]:offs[2]].reshape(c, 8)
        self.w_mid = flat[offs[2]:offs[3]].reshape(self.K, 8, 3, 3)
        self.w_main = flat[offs[3]:offs[4]].reshape(c, self.K)

    def descriptor(self) -> EngineDescriptor:
        return EngineDescriptor(self.num_classes, self.K, f"toy:{self.seed}")

    def forward(self, image: np.ndarray) -> ModelOutput:
        return self._run(image, frozenset())

    def forward_ablated(self, image: np.ndarray, channels: Iterable[int]) -> ModelOutput:
        return self._run(image, _check_ablation(channels, self.K))

    def _run(self, image: np.ndarray, ablate: frozenset[int]) -> ModelOutput:
        validate_tensor(image)
        if image.ndim != 3 or image.shape[0] != 3:
            raise ContractError("toy engine expects a (3, H, W) image")
        h, w = image.shape[1], image.shape[2]
        if h < 8 or w < 8:
            raise ContractError("toy engine needs at least an 8x8 image")
        from .tensors import bilinear_resize

        stem = np.maximum(_conv_valid(image, self.w_stem), 0.0)      # (8, H-2, W-2)
        aux = np.einsum("khw,ck->chw", stem, self.w_aux).astype(np.float32)
        acts = np.maximum(_conv_valid(stem, self.w_mid), 0.0)        # (K, H-4, W-4)
        head_in = acts
        if ablate:
            head_in = acts.copy()
            head_in[sorted(ablate)] = 0.0
        main_lo = np.einsum("khw,ck->chw", head_in, self.w_main).astype(np.float32)
        main = bilinear_resize(main_lo, h, w)
        return ModelOutput(main=main, aux=aux, activations=acts)


# ---------------------------------------------------------------------------
# Memoizing wrapper
# ---------------------------------------------------------------------------

class CachedEngine:
    """LRU-memoized engine keyed by a 64-bit content hash of the request.

    Semantics are identical to the wrapped engine; an internal lock makes
    the wrapper safe to share between evaluation threads.
    """

    def __init__(self, inner: InferenceEngine, capacity: int = 256):
        if capacity < 0:
            raise ContractError("cache capacity must be non-negative")
        self.inner = inner
        self.capacity = int(capacity)
        self._store: OrderedDict[bytes, ModelOutput] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def descriptor(self) -> EngineDescriptor:
        return self.inner.descriptor()

    @staticmethod
    def _key(image: np.ndarray, ablate: frozenset[int]) -> bytes:
        h = hashlib.blake2b(digest_size=8)
        h.update(struct.pack("<3I", *image.shape))
        h.update(np.ascontiguousarray(image, dtype="<f4").tobytes())
        h.update(struct.pack(f"<{len(ablate) + 1}I", len(ablate), *sorted(ablate)))
        return h.digest()

    def forward(self, image: np.ndarray) -> ModelOutput:
        return self._call(image, frozenset())

    def forward_ablated(self, image: np.ndarray, channels: Iterable[int]) -> ModelOutput:
        return self._call(image, _check_ablation(channels, self.descriptor().num_channels))

    def _call(self, image: np.ndarray, ablate: frozenset[int]) -> ModelOutput:
        key = self._key(image, ablate)
        with self._lock:
            if key in self._store:
                self.hits += 1
                self._store.move_to_end(key)
                return self._store[key]
        out = (self.inner.forward(image) if not ablate
               else self.inner.forward_ablated(image, ablate))
        with self._lock:
            self.misses += 1
            if self.capacity > 0:
                self._store[key] = out
                self._store.move_to_end(key)
                while len(self._store) > self.capacity:
                    self._store.popitem(last=False)
        return out


# ---------------------------------------------------------------------------
# Framed stdio protocol
#
# Handshake: child emits magic "SPRYv1\n", then u32le C, u32le K.
# Request:   u8 opcode (1 forward, 2 forward_ablated, 255 shutdown) |
#            u32le ablation count n | n x u32le channel ids |
#            u32le payload length | payload = one TNSR blob (the image).
# Response:  u8 status (0 ok, 1 error); ok -> three u32le-length-prefixed
#            TNSR blobs (main, aux, activations); error -> u32le length +
#            UTF-8 message.
# ---------------------------------------------------------------------------

PROTOCOL_MAGIC = b"SPRYv1\n"
OP_FORWARD = 1
OP_FORWARD_ABLATED = 2
OP_SHUTDOWN = 255


def read_exact(stream, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = stream.read(remaining)
        if not chunk:
            raise TransportError(f"stream ended {remaining} bytes short")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_handshake(stream) -> tuple[int, int]:
    magic = read_exact(stream, len(PROTOCOL_MAGIC))
    if magic != PROTOCOL_MAGIC:
        raise TransportError(f"bad handshake magic {magic!r}")
    c, k = struct.unpack("<2I", read_exact(stream, 8))
    if c < 1 or k < 1:
        raise TransportError(f"handshake declared C={c}, K={k}")
    return c, k


def encode_request(opcode: int, channels: Iterable[int], image: np.ndarray | None) -> bytes:
    ids = sorted(int(c) for c in channels)
    head = struct.pack(f"<B{len(ids) + 1}I", opcode, len(ids), *ids)
    payload = tensor_to_bytes(image) if image is not None else b""
    return head + struct.pack("<I", len(payload)) + payload


def read_request(stream) -> tuple[int, frozenset[int], np.ndarray | None]:
    """Decode one request frame (the server side of the protocol)."""
    opcode = read_exact(stream, 1)[0]
    (n,) = struct.unpack("<I", read_exact(stream, 4))
    if n > 1_000_000:
        raise TransportError(f"implausible ablation count {n}")
    ids = struct.unpack(f"<{n}I", read_exact(stream, 4 * n)) if n else ()
    (length,) = struct.unpack("<I", read_exact(stream, 4))
    image = None
    if length:
        try:
            image = tensor_from_bytes(read_exact(stream, length))
        except Exception as exc:
            raise TransportError(f"undecodable request payload: {exc}") from exc
    return opcode, frozenset(ids), image


def _read_blob(stream) -> np.ndarray:
    (length,) = struct.unpack("<I", read_exact(stream, 4))
    blob = read_exact(stream, length)
    try:
        return tensor_from_bytes(blob)
    except Exception as exc:
        raise TransportError(f"undecodable tensor blob: {exc}") from exc


def read_response(stream) -> ModelOutput:
    status = read_exact(stream, 1)[0]
    if status == 0:
        main = _read_blob(stream)
        aux = _read_blob(stream)
        acts = _read_blob(stream)
        try:
            return ModelOutput(main=main, aux=aux, activations=acts)
        except ContractError as exc:
            raise TransportError(f"inconsistent response tensors: {exc}") from exc
    if status == 1:
        (length,) = struct.unpack("<I", read_exact(stream, 4))
        message = read_exact(stream, length).decode("utf-8", errors="replace")
        raise TransportError(f"engine reported an error: {message}")
    raise TransportError(f"unknown response status {status}")


def encode_response(out: ModelOutput) -> bytes:
    parts = [struct.pack("<B", 0)]
    for t in (out.main, out.aux, out.activations):
        blob = tensor_to_bytes(t)
        parts.append(struct.pack("<I", len(blob)))
        parts.append(blob)
    return b"".join(parts)


def encode_error(message: str) -> bytes:
    data = message.encode("utf-8")
    return struct.pack("<BI", 1, len(data)) + data


class ExternalEngine:
    """Client for an external inference process speaking the framed protocol."""

    def __init__(self, command, name: str | None = None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._proc = subprocess.Popen(argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        self._name = name or argv[0]
        self._lock = threading.Lock()
        try:
            self._num_classes, self._num_channels = read_handshake(self._proc.stdout)
        except TransportError:
            self._reap()
            raise

    def descriptor(self) -> EngineDescriptor:
        return EngineDescriptor(self._num_classes, self._num_channels, self._name)

    def forward(self, image: np.ndarray) -> ModelOutput:
        return self._call(OP_FORWARD, frozenset(), image)

    def forward_ablated(self, image: np.ndarray, channels: Iterable[int]) -> ModelOutput:
        return self._call(OP_FORWARD_ABLATED,
                          _check_ablation(channels, self._num_channels), image)

    def _call(self, opcode: int, ablate: frozenset[int], image: np.ndarray) -> ModelOutput:
        with self._lock:
            try:
                self._proc.stdin.write(encode_request(opcode, ablate, image))
                self._proc.stdin.flush()
                out = read_response(self._proc.stdout)
            except (TransportError, BrokenPipeError, OSError) as exc:
                if self._proc.poll() is not None:
                    raise EngineLostError(
                        f"engine process exited with code {self._proc.returncode}") from exc
                if isinstance(exc, TransportError):
                    raise
                raise TransportError(str(exc)) from exc
        if out.main.shape[0] != self._num_classes:
            raise ContractError(
                f"response main has {out.main.shape[0]} classes, handshake said {self._num_classes}")
        if out.activations.shape[0] != self._num_channels:
            raise ContractError(
                f"response has {out.activations.shape[0]} activation channels, "
                f"handshake said {self._num_channels}")
        return out

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.write(encode_request(OP_SHUTDOWN, (), None))
                self._proc.stdin.flush()
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._reap()

    def _reap(self) -> None:
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                if stream:
                    stream.close()
            except OSError:
                pass
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
