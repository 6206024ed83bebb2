"""Command-line entry points.

Subcommands:

* ``synth``: write a synthetic dataset with ground truth.
* ``track``: run the tracker over a detection file, emit a tracks CSV.
* ``eval``: score a tracks CSV against ground truth.
* ``court``: detect court boundaries in an image, print them as JSON.
* ``stabilize``: rewrite detections into the first frame's coordinates.
* ``ablate``: sweep tracker parameters and tabulate the scores.

Tracker options are read from a ``key=value`` config file (one pair per
line, ``#`` comments); keys mirror the TrackerConfig fields.  The exit
code is 0 exactly when the command ran without error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import ablate as ablate_mod
from .court import (
    HsvFilter,
    court_polygon,
    detect_segments,
    dominant_orientations,
    join_segments,
    sweep_boundary,
)
from .featfile import attach_features
from .features import LAYERS, TrackerConfig
from .matcher import track_sequence
from .metrics import detection_prf, evaluate
from .model import Sequence
from .seqio import (
    load_homographies,
    load_sequence,
    load_tracks_csv,
    save_sequence,
    save_tracks,
)
from .stabilization import Homography, stabilize
from .synth import SynthConfig, generate

logger = logging.getLogger(__name__)

__all__ = ["main", "parse_config_file"]


def parse_config_file(path: str | Path) -> TrackerConfig:
    """Read a key=value tracker config; unknown keys are errors."""
    raw: dict[str, str] = {}
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
        key, value = stripped.split("=", 1)
        raw[key] = value
    return TrackerConfig.from_mapping(raw)


def _load_homography_file(path: str | Path) -> dict[tuple[int, int], Homography]:
    out = {}
    for frame_from, frame_to, flat in load_homographies(path):
        matrix = np.array(flat, dtype=np.float64).reshape(3, 3)
        out[(frame_from, frame_to)] = Homography.from_matrix(matrix)
    return out


def _load_input_sequence(args) -> Sequence:
    seq = load_sequence(args.detections, args.frames)
    if getattr(args, "features", None):
        seq = attach_features(seq, args.features)
    return seq


def _cmd_synth(args) -> int:
    cfg = SynthConfig(
        seed=args.seed,
        n_players=args.players,
        n_frames=args.frames,
        width=args.width,
        height=args.height,
        motion=args.motion,
        placement=args.placement,
        walk_sigma=args.walk_sigma,
        swap_period=args.swap_period,
        cross_offset=args.cross_offset,
        cross_distance=args.cross_distance,
        dropout_prob=args.dropout_prob,
        pan_per_frame=args.pan,
        feat_dim=args.feat_dim,
        feat_noise=args.feat_noise,
        layer=args.layer,
        line_spacing=args.line_spacing,
        write_images=args.write_images,
    )
    meta = generate(cfg, args.out)
    print(
        f"wrote {meta['n_detections']} detections over {cfg.n_frames} frames "
        f"to {args.out}"
    )
    return 0


def _cmd_track(args) -> int:
    cfg = parse_config_file(args.config) if args.config else TrackerConfig()
    seq = _load_input_sequence(args)
    homographies = _load_homography_file(args.homographies) if args.homographies else None
    result = track_sequence(seq, cfg, homographies)
    rows = []
    for meta in seq.frames:
        labels = result.assignments[meta.frame_id]
        for det, label in zip(seq.detections[meta.frame_id], labels):
            rows.append((meta.frame_id, label, det.bbox))
    save_tracks(args.out, rows)
    print(f"tracked {len(seq.frames)} frames into {result.n_tracks} tracks: {args.out}")
    return 0


def _cmd_eval(args) -> int:
    gt = load_tracks_csv(args.gt)
    hyp = load_tracks_csv(args.tracks)
    summary = evaluate(gt, hyp, gate=args.gate)
    prf = detection_prf(gt, hyp, gate=args.gate)
    if args.report == "json":
        payload = {
            "mota": summary.mota,
            "motp": summary.motp,
            "fp": summary.fp,
            "misses": summary.misses,
            "mismatches": summary.mismatches,
            "gt_count": summary.gt_count,
            "matched_count": summary.matched_count,
            "precision": prf.precision,
            "recall": prf.recall,
            "f1": prf.f1,
        }
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    rows = [
        ("MOTA", f"{summary.mota:.4f}"),
        ("MOTP", f"{summary.motp:.4f}"),
        ("false positives", str(summary.fp)),
        ("misses", str(summary.misses)),
        ("mismatches", str(summary.mismatches)),
        ("gt boxes", str(summary.gt_count)),
        ("matched", str(summary.matched_count)),
        ("precision", f"{prf.precision:.4f}"),
        ("recall", f"{prf.recall:.4f}"),
        ("f1", f"{prf.f1:.4f}"),
    ]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")
    return 0


def _read_image_rgb(path: str | Path) -> np.ndarray:
    import cv2

    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise ValueError(f"cannot read image {path}")
    return img[..., ::-1].copy()


def _cmd_court(args) -> int:
    image = _read_image_rgb(args.image)
    h = image.shape[0]
    if args.theta_side is not None:
        theta_side = math.radians(args.theta_side)
        theta_base = math.radians(args.theta_base if args.theta_base is not None else 90.0)
    else:
        segments = detect_segments(image, grad_threshold=args.grad_threshold)
        joined = join_segments(segments, image.shape[1], h)
        theta_side, theta_base = dominant_orientations(joined, image.shape[1], h)
    hsv = HsvFilter(
        hue_lo=args.hue_lo, hue_hi=args.hue_hi, sat_min=args.sat_min, val_min=args.val_min
    )
    # The two sidelines are found independently in the top and bottom
    # halves of the frame; the baseline is swept over the full width.
    top = sweep_boundary(
        image[: h // 2], theta_side, hsv, "sideline", offset=args.offset, step=args.step
    )
    bottom_half = sweep_boundary(
        image[h // 2 :], theta_side, hsv, "sideline", offset=args.offset, step=args.step
    )
    shift = float(h // 2)
    bottom = type(bottom_half)(
        p1=(bottom_half.p1[0], bottom_half.p1[1] + shift),
        p2=(bottom_half.p2[0], bottom_half.p2[1] + shift),
        theta=bottom_half.theta,
        support=bottom_half.support,
        low_confidence=bottom_half.low_confidence,
        score=bottom_half.score,
    )
    baseline = None
    if not args.no_baseline:
        baseline = sweep_boundary(
            image, theta_base, hsv, "baseline", offset=args.offset, step=args.step
        )
    polygon = court_polygon(top, bottom, baseline, image.shape[1], h)

    def line_payload(line):
        return {
            "p1": list(line.p1),
            "p2": list(line.p2),
            "theta_deg": math.degrees(line.theta),
            "support": line.support,
            "score": line.score,
            "low_confidence": line.low_confidence,
        }

    payload = {
        "sideline_theta_deg": math.degrees(theta_side),
        "baseline_theta_deg": math.degrees(theta_base),
        "top": line_payload(top),
        "bottom": line_payload(bottom),
        "baseline": line_payload(baseline) if baseline else None,
        "polygon": [list(v) for v in polygon.vertices],
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _cmd_stabilize(args) -> int:
    seq = load_sequence(args.detections, args.frames)
    homographies = _load_homography_file(args.homographies)
    result = stabilize(seq, homographies)
    save_sequence(result.stabilized, args.out_detections, args.out_frames)
    print(f"stabilized {len(seq.frames)} frames into {args.out_detections}")
    return 0


def _alpha_grid(step: float) -> list[float]:
    n = int(round(1.0 / step))
    return [round(i * step, 10) for i in range(n + 1)]


def _cmd_ablate(args) -> int:
    seq = _load_input_sequence(args)
    gt = load_tracks_csv(args.gt)
    homographies = _load_homography_file(args.homographies) if args.homographies else None
    neighborhoods = [int(v) for v in args.neighborhoods.split(",")]
    if args.layers == "auto":
        layers = [_detect_feature_layer(seq)]
    else:
        layers = args.layers.split(",")
    cells = ablate_mod.run_ablation(
        seq,
        gt,
        homographies,
        alphas=_alpha_grid(args.alpha_step),
        neighborhoods=neighborhoods,
        layers=layers,
        stabilize=args.stabilize,
        secondary=args.secondary,
        gate=args.gate,
        threads=args.threads,
    )
    print(ablate_mod.format_table(cells))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(ablate_mod.cells_to_json(cells), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def _detect_feature_layer(seq: Sequence) -> str:
    for meta in seq.frames:
        for det in seq.detections[meta.frame_id]:
            if det.features is not None:
                return det.features.layer.name
    return "b4c2"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="courttrack", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    parser.add_argument("--seed", type=int, default=0, help="seed for generation commands")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--players", type=int, default=10)
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--width", type=int, default=1920)
    p.add_argument("--height", type=int, default=1080)
    p.add_argument("--motion", choices=["static", "walk", "crossing"], default="walk")
    p.add_argument("--placement", choices=["grid", "line"], default="grid")
    p.add_argument("--walk-sigma", type=float, default=3.0)
    p.add_argument("--swap-period", type=int, default=3)
    p.add_argument("--cross-offset", type=float, default=6.0)
    p.add_argument("--cross-distance", type=float, default=300.0)
    p.add_argument("--dropout-prob", type=float, default=0.0)
    p.add_argument("--pan", type=float, default=0.0)
    p.add_argument("--feat-dim", type=int, default=64)
    p.add_argument("--feat-noise", type=float, default=0.0)
    p.add_argument("--layer", choices=sorted(LAYERS), default="b4c2")
    p.add_argument("--line-spacing", type=float, default=10.0)
    p.add_argument("--write-images", action="store_true")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("track", help="assign track ids to detections")
    p.add_argument("--detections", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--features", default=None, help="directory of .pfv files")
    p.add_argument("--config", default=None, help="key=value tracker config file")
    p.add_argument("--homographies", default=None)
    p.add_argument("--out", default="tracks.csv")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval", help="score tracks against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--tracks", required=True)
    p.add_argument("--gate", type=float, default=0.5)
    p.add_argument("--report", choices=["table", "json"], default="table")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("court", help="find court boundaries in an image")
    p.add_argument("--image", required=True)
    p.add_argument("--hue-lo", type=float, required=True)
    p.add_argument("--hue-hi", type=float, required=True)
    p.add_argument("--sat-min", type=float, default=0.0)
    p.add_argument("--val-min", type=float, default=0.0)
    p.add_argument("--grad-threshold", type=float, default=20.0)
    p.add_argument("--offset", type=float, default=25.0)
    p.add_argument("--step", type=float, default=12.0)
    p.add_argument("--theta-side", type=float, default=None, help="override, degrees")
    p.add_argument("--theta-base", type=float, default=None, help="override, degrees")
    p.add_argument("--no-baseline", action="store_true")
    p.set_defaults(func=_cmd_court)

    p = sub.add_parser("stabilize", help="rewrite detections in reference coordinates")
    p.add_argument("--detections", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--homographies", required=True)
    p.add_argument("--out-detections", required=True)
    p.add_argument("--out-frames", required=True)
    p.set_defaults(func=_cmd_stabilize)

    p = sub.add_parser("ablate", help="sweep tracker parameters")
    p.add_argument("--detections", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--gt", required=True)
    p.add_argument("--homographies", default=None)
    p.add_argument("--alpha-step", type=float, default=0.05)
    p.add_argument("--neighborhoods", default="1,2,3")
    p.add_argument("--layers", default="auto", help="comma list, or 'auto' from the data")
    p.add_argument("--stabilize", action="store_true")
    p.add_argument("--secondary", choices=["deep", "color"], default="deep")
    p.add_argument("--gate", type=float, default=0.5)
    p.add_argument("--json", default=None, help="also write cells to this JSON file")
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
