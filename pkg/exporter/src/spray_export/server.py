"""Serve a checkpoint over the framed stdio protocol (strict
request-response order; per-request failures become status-1 error frames,
never truncation)."""
from __future__ import annotations

import sys

from . import protocol
from .torch_backend import CheckpointSpec, make_engine


def serve(spec: CheckpointSpec, stdin=None, stdout=None) -> int:
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    forward, num_classes, num_channels = make_engine(spec)
    stdout.write(protocol.handshake_bytes(num_classes, num_channels))
    stdout.flush()
    while True:
        try:
            opcode, ablate, image = protocol.read_request(stdin)
        except protocol.ProtocolError as exc:
            print(f"spray-export: malformed request: {exc}", file=sys.stderr)
            return 1
        if opcode == protocol.OP_SHUTDOWN:
            return 0
        if opcode not in (protocol.OP_FORWARD, protocol.OP_FORWARD_ABLATED):
            stdout.write(protocol.error_response(f"unknown opcode {opcode}"))
            stdout.flush()
            continue
        if image is None:
            stdout.write(protocol.error_response("request carried no image"))
            stdout.flush()
            continue
        try:
            channels = ablate if opcode == protocol.OP_FORWARD_ABLATED else frozenset()
            main, aux, acts = forward(image, channels)
            frame = protocol.ok_response(main, aux, acts)
        except Exception as exc:  # convert to an in-band error frame
            frame = protocol.error_response(str(exc))
        stdout.write(frame)
        stdout.flush()
