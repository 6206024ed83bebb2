"""Command line entry point.

    courtexport export --input game.mp4 --out dataset/ --layer b4c2

writes dataset/frames.jsonl, dataset/detections.jsonl and
dataset/features/*.pfv, ready for the tracker's `track` command.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .export import ExportError, ExportJob, export
from .gridmap import CROP_SIZE, LAYER_GRIDS
from .models import ModelLoadError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="courtexport",
        description="export pose keypoints and CNN part features for tracking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="process a video or image directory")
    p.add_argument("--input", required=True, help="video file or image directory")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--layer", choices=sorted(LAYER_GRIDS), default="b4c2")
    p.add_argument("--neighborhood", type=int, choices=(1, 2, 3), default=2)
    p.add_argument("--fps", type=float, default=4.0, help="sampled frames per second")
    p.add_argument("--crop-size", type=int, default=CROP_SIZE)
    p.add_argument(
        "--interpolation",
        choices=("nearest", "bilinear", "bicubic"),
        default="bilinear",
        help="crop resampling; recorded in export_meta.json",
    )
    p.add_argument(
        "--keypoints",
        default=None,
        help="precomputed keypoints JSONL; skips the pose network entirely",
    )
    p.add_argument(
        "--min-conf",
        type=float,
        default=0.0,
        help="parts below this confidence get no feature vectors",
    )
    p.add_argument(
        "--random-weights",
        action="store_true",
        help="random backbone instead of pretrained; offline smoke runs",
    )
    p.add_argument("--seed", type=int, default=0, help="seed for --random-weights")
    p.add_argument("--device", default="cpu")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            source=Path(args.input),
            out_dir=Path(args.out),
            layer=args.layer,
            neighborhood=args.neighborhood,
            fps=args.fps,
            min_conf=args.min_conf,
            crop_size=args.crop_size,
            interpolation=args.interpolation,
            keypoints_path=Path(args.keypoints) if args.keypoints else None,
            pretrained=not args.random_weights,
            seed=args.seed,
            device=args.device,
        )
        report = export(job)
    except (ExportError, ModelLoadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for frame_id, message in report.errors:
        print(f"frame {frame_id} skipped: {message}", file=sys.stderr)
    print(
        f"exported {report.detections} detections over {report.frames} frames "
        f"({report.features_written} feature files) -> {args.out}"
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
