"""Minimal external engine used by the protocol tests.

Modes:
    fixed     respond with deterministic pattern tensors shaped from the image
    truncate  write half of one response, then exit (simulates a dying child)
    silent    exit immediately without a handshake
"""
import os
import struct
import sys

import numpy as np

from sprayeval.engines import (OP_SHUTDOWN, PROTOCOL_MAGIC, ModelOutput,
                               encode_error, encode_response, read_request)

NUM_CLASSES = 7
NUM_CHANNELS = 8


def fixed_output(image: np.ndarray) -> ModelOutput:
    c, h, w = image.shape
    main = np.arange(NUM_CLASSES * h * w, dtype=np.float32).reshape(NUM_CLASSES, h, w)
    main = (main % 11.0) - 5.0
    aux = np.full((NUM_CLASSES, max(1, h // 2), max(1, w // 2)), 0.25, dtype=np.float32)
    acts = np.ones((NUM_CHANNELS, max(1, h - 4), max(1, w - 4)), dtype=np.float32)
    return ModelOutput(main=main, aux=aux, activations=acts)


def main() -> None:
    mode = sys.argv[1] if len(sys.argv) > 1 else "fixed"
    out = sys.stdout.buffer
    if mode == "silent":
        return
    out.write(PROTOCOL_MAGIC + struct.pack("<2I", NUM_CLASSES, NUM_CHANNELS))
    out.flush()
    while True:
        opcode, _, image = read_request(sys.stdin.buffer)
        if opcode == OP_SHUTDOWN:
            return
        if image is None:
            out.write(encode_error("request carried no image"))
            out.flush()
            continue
        if mode == "truncate":
            frame = encode_response(fixed_output(image))
            out.write(frame[: len(frame) // 2])
            out.flush()
            os._exit(1)
        out.write(encode_response(fixed_output(image)))
        out.flush()


if __name__ == "__main__":
    main()
