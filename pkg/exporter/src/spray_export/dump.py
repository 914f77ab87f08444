"""Dump per-image model outputs as TNSR files."""
from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from . import tnsr
from .torch_backend import CheckpointSpec, make_engine

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def load_image(path: Path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def dump(spec: CheckpointSpec, image_dir, out_dir) -> int:
    """Write <id>.main.tnsr / <id>.aux.tnsr / <id>.act.tnsr per image.

    Unreadable images are skipped with a log line; any skip makes the final
    exit status nonzero.
    """
    image_dir = Path(image_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    forward, _, _ = make_engine(spec)
    paths = sorted(p for p in image_dir.iterdir()
                   if p.suffix.lower() in _IMAGE_SUFFIXES)
    if not paths:
        print(f"spray-export: no images under {image_dir}", file=sys.stderr)
        return 1
    failures = 0
    for path in paths:
        try:
            image = load_image(path)
            main, aux, acts = forward(image, frozenset())
        except Exception as exc:
            print(f"spray-export: skipping {path.name}: {exc}", file=sys.stderr)
            failures += 1
            continue
        stem = path.stem
        for name, tensor in (("main", main), ("aux", aux), ("act", acts)):
            (out_dir / f"{stem}.{name}.tnsr").write_bytes(tnsr.encode(tensor))
    return 1 if failures else 0
