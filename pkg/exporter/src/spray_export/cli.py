"""spray-export command line: serve a checkpoint over the engine protocol,
or dump per-image outputs as TNSR files."""
from __future__ import annotations

import argparse
import sys

from .torch_backend import ARCHITECTURES, BACKBONES, CheckpointSpec


def _add_spec_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--arch", required=True, choices=ARCHITECTURES)
    parser.add_argument("--backbone", choices=BACKBONES)
    parser.add_argument("--weights", help="checkpoint path (torch state dict)")
    parser.add_argument("--layer",
                        help="named module providing the activation maps")
    parser.add_argument("--classes", type=int, default=7)
    parser.add_argument("--seed", type=int, default=0,
                        help="weight seed for the toy architecture")


def _spec_from_args(args) -> CheckpointSpec:
    return CheckpointSpec(architecture=args.arch, backbone=args.backbone,
                          weights=args.weights, layer=args.layer,
                          classes=args.classes, seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spray-export")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("serve", help="speak the engine protocol on stdio")
    _add_spec_flags(p)
    p = sub.add_parser("dump", help="write per-image TNSR outputs")
    _add_spec_flags(p)
    p.add_argument("--images", required=True, help="directory of input images")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _spec_from_args(args)
        if args.command == "serve":
            from .server import serve

            return serve(spec)
        from .dump import dump

        return dump(spec, args.images, args.out)
    except ValueError as exc:
        print(f"spray-export: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
