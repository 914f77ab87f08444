"""Command-line surface.

Subcommands: ingest, synth, seg-eval, cam-eval, wsde, report, replay.
Exit codes: 0 ok, 2 config error, 3 data error, 4 engine error.
"""
from __future__ import annotations

import argparse
import sys

from .errors import (ConfigError, ContractError, DataError, EngineLostError,
                     SprayEvalError, TensorCorruptionError, TensorFormatError,
                     TransportError)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ENGINE = 4


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("dataset", help="dataset root directory")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--engine", default="toy:0",
                        help="toy:<seed> or exec:<command line>")
    parser.add_argument("--fusion", default="out",
                        choices=["out", "aux", "add", "multi"])
    parser.add_argument("--fusion-space", default="logit",
                        choices=["logit", "prob"])
    parser.add_argument("--cam", default="ablation", choices=["ablation", "score"])
    parser.add_argument("--cluster", default="centres",
                        choices=["centres", "affinity", "threshold"])
    parser.add_argument("--top-mode", default="percentile",
                        choices=["percentile", "value"])
    parser.add_argument("--min-island-px", type=int, default=4)
    parser.add_argument("--unit-ul", type=float, default=20.9,
                        help="microliters per spray actuation")
    parser.add_argument("--min-dist-px", type=float, default=10.0,
                        help="minimum keypoint spacing in pixels")
    parser.add_argument("--box-halfwidth-px", type=int, default=5,
                        help="pointing-game box half width")
    parser.add_argument("--cm2-per-px", type=float, default=0.01,
                        help="camera scale: square centimeters per pixel")
    parser.add_argument("--include-background", action="store_true")
    parser.add_argument("--jobs", type=int, default=1)


def _config_from_args(args) -> "RunConfig":
    from .pipeline import RunConfig
    from .wsde import SprayerSpec

    try:
        sprayer = SprayerSpec(unit_deposit_ul=args.unit_ul,
                              min_point_distance_px=args.min_dist_px,
                              box_halfwidth_px=args.box_halfwidth_px,
                              cm2_per_pixel=args.cm2_per_px)
        return RunConfig(dataset_root=args.dataset, out_dir=args.out,
                         engine=args.engine, fusion=args.fusion,
                         fusion_space=args.fusion_space, cam_method=args.cam,
                         cluster_method=args.cluster, top_mode=args.top_mode,
                         min_island_px=args.min_island_px,
                         include_background=args.include_background,
                         jobs=args.jobs, sprayer=sprayer)
    except ContractError as exc:
        raise ConfigError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sprayeval",
        description="Post-spray evaluation: segmentation metrics, gradient-free "
                    "CAMs, faithfulness curves, and deposition estimation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a dataset and print statistics")
    p.add_argument("dataset")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=96)
    p.add_argument("--width", type=int, default=96)

    for name, help_text in (("seg-eval", "segmentation metrics only"),
                            ("cam-eval", "CAMs and faithfulness curves"),
                            ("wsde", "deposition estimation"),
                            ("report", "full pipeline and all reports")):
        p = sub.add_parser(name, help=help_text)
        _add_run_flags(p)

    p = sub.add_parser("replay", help="recompute reports from intermediates")
    p.add_argument("--out", required=True)
    return parser


_STAGES = {
    "seg-eval": frozenset({"seg"}),
    "cam-eval": frozenset({"seg", "cam"}),
    "wsde": frozenset({"seg", "wsde"}),
    "report": frozenset({"seg", "cam", "wsde"}),
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, TensorFormatError, TensorCorruptionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TransportError, EngineLostError) as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except SprayEvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def _dispatch(args) -> int:
    if args.command == "ingest":
        from .datasets import dataset_statistics, ingest

        index = ingest(args.dataset)
        stats = dataset_statistics(index)
        print(f"dataset: {index.root}")
        print(f"images: {stats['num_images']} "
              f"(train {stats['num_train']}, test {stats['num_test']})")
        print(f"total annotations: {stats['total_annotations']}")
        for name, count in stats["instances"].items():
            print(f"  {name}: {count}")
        for row in stats["coverage_rate"]:
            hit = "n/a" if row["hit_pct"] is None else f"{row['hit_pct']:.1f}%"
            print(f"  {row['class']}: coverage {row['coverage_cm2']:.2f} cm2, "
                  f"hit rate {hit}")
        return EXIT_OK

    if args.command == "synth":
        from .synthetic import synth_dataset

        stats = synth_dataset(args.out, num_images=args.images, seed=args.seed,
                              height=args.height, width=args.width)
        print(f"wrote {stats['images']} images "
              f"({stats['split']['train']} train / {stats['split']['test']} test), "
              f"{stats['keypoints']} keypoints -> {args.out}")
        return EXIT_OK

    if args.command == "replay":
        from .replay import replay

        checks = replay(args.out)
        failed = [c for c in checks if not c.ok]
        for check in checks:
            status = "ok" if check.ok else "MISMATCH"
            line = f"[{status}] {check.name}"
            if check.detail:
                line += f" ({check.detail})"
            print(line)
        print(f"replay: {len(checks) - len(failed)}/{len(checks)} checks passed")
        return EXIT_OK if not failed else EXIT_DATA

    if args.command in _STAGES:
        from .pipeline import run_pipeline
        from .reports import render_reports

        cfg = _config_from_args(args)
        bundle = run_pipeline(cfg, stages=_STAGES[args.command])
        written = render_reports(bundle, cfg.out_dir)
        print(f"wrote {len(written)} report files under {cfg.out_dir}")
        return EXIT_OK

    raise ConfigError(f"unknown command {args.command!r}")


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
