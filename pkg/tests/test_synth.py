"""Synthetic sequence generator: determinism, dropouts, pan homographies."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from courttrack.featfile import read_features
from courttrack.model import NUM_PARTS
from courttrack.seqio import load_homographies, load_sequence, load_tracks_csv
from courttrack.stabilization import Homography, apply, stabilize
from courttrack.synth import BuiltSequence, SynthConfig, build_sequence, generate

SMALL = SynthConfig(seed=0, n_players=3, n_frames=6, feat_dim=16)


def tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_generation_is_byte_deterministic(tmp_path):
    generate(SMALL, tmp_path / "a")
    generate(SMALL, tmp_path / "b")
    a = tree_digest(tmp_path / "a")
    b = tree_digest(tmp_path / "b")
    assert a == b
    assert "detections.jsonl" in a and "gt.csv" in a and "meta.json" in a


def test_different_seeds_differ(tmp_path):
    generate(SMALL, tmp_path / "a")
    generate(SynthConfig(seed=1, n_players=3, n_frames=6, feat_dim=16), tmp_path / "b")
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "b")


def test_written_dataset_loads_back(tmp_path):
    meta = generate(SMALL, tmp_path)
    seq = load_sequence(tmp_path / "detections.jsonl", tmp_path / "frames.jsonl")
    assert len(seq.frames) == 6
    n_dets = sum(len(seq.frame_detections(t)) for t in seq.frame_ids)
    assert n_dets == meta["n_detections"] == 18
    gt = load_tracks_csv(tmp_path / "gt.csv")
    assert set(gt) == set(range(6))
    for det in seq.frame_detections(0):
        pfs = read_features(tmp_path / "features" / det.feat_ref)
        assert pfs.layer.name == "b4c2"
        assert pfs.channels == 16


def test_static_noise_free_frames_repeat_exactly():
    cfg = SynthConfig(
        seed=3, n_players=3, n_frames=5, motion="static", feat_dim=8,
        conf_range=(1.0, 1.0),
    )
    built = build_sequence(cfg)
    by_player = {}
    for t in built.seq.frame_ids:
        for det, player in zip(built.seq.frame_detections(t), built.det_players[t]):
            by_player.setdefault(player, []).append(det)
    for player, dets in by_player.items():
        assert len(dets) == 5
        for det in dets[1:]:
            assert det.keypoints == dets[0].keypoints
            assert det.features.cells is dets[0].features.cells


def test_detection_order_is_permuted():
    built = build_sequence(SynthConfig(seed=0, n_players=4, n_frames=8, feat_dim=8))
    assert any(
        built.det_players[t] != sorted(built.det_players[t])
        for t in built.seq.frame_ids
    )


def test_ground_truth_keeps_dropped_players():
    cfg = SynthConfig(seed=0, n_players=4, n_frames=30, feat_dim=8, dropout_prob=0.3)
    built = build_sequence(cfg)
    assert built.dropouts
    assert all(len(rows) == 4 for rows in built.gt.values())
    for t, p in built.dropouts:
        assert p not in built.det_players[t]
    n_dets = sum(len(built.seq.frame_detections(t)) for t in built.seq.frame_ids)
    assert n_dets == 4 * 30 - len(built.dropouts)


def test_dropouts_never_repeat_back_to_back():
    cfg = SynthConfig(seed=0, n_players=4, n_frames=30, feat_dim=8, dropout_prob=0.3)
    built = build_sequence(cfg)
    dropped = set(built.dropouts)
    assert all((t + 1, p) not in dropped for t, p in dropped)


def test_pan_emits_exact_homographies(tmp_path):
    cfg = SynthConfig(seed=2, n_players=3, n_frames=6, feat_dim=8, pan_per_frame=5.0)
    generate(cfg, tmp_path)
    loaded = load_homographies(tmp_path / "homographies.jsonl")
    assert [(a, b) for a, b, _ in loaded] == [(t, t + 1) for t in range(5)]
    expected = Homography.translation(-5.0, 0.0)
    for _, _, flat in loaded:
        h = Homography.from_matrix(np.array(flat).reshape(3, 3))
        assert h.is_close(expected, tol=1e-12)


def test_no_pan_no_homography_file(tmp_path):
    generate(SMALL, tmp_path)
    assert not (tmp_path / "homographies.jsonl").exists()
    assert build_sequence(SMALL).homographies == {}


def test_stabilization_cancels_the_pan():
    cfg = SynthConfig(
        seed=2, n_players=3, n_frames=6, motion="static", feat_dim=8,
        pan_per_frame=5.0, conf_range=(1.0, 1.0),
    )
    built = build_sequence(cfg)
    result = stabilize(built.seq, built.homographies)
    reference = {}
    for t in built.seq.frame_ids:
        dets = result.stabilized.frame_detections(t)
        for det, player in zip(dets, built.det_players[t]):
            if player not in reference:
                reference[player] = det.keypoints
                continue
            for kp, kp0 in zip(det.keypoints, reference[player]):
                assert abs(kp.x - kp0.x) < 1e-6
                assert abs(kp.y - kp0.y) < 1e-6


def test_unstabilized_pan_drifts():
    cfg = SynthConfig(
        seed=2, n_players=1, n_frames=3, motion="static", feat_dim=8,
        pan_per_frame=5.0, conf_range=(1.0, 1.0),
    )
    built = build_sequence(cfg)
    x0 = built.seq.frame_detections(0)[0].keypoints[0].x
    x2 = built.seq.frame_detections(2)[0].keypoints[0].x
    assert x2 == pytest.approx(x0 - 10.0)


def test_meta_contents(tmp_path):
    meta = generate(SMALL, tmp_path)
    on_disk = json.loads((tmp_path / "meta.json").read_text())
    assert on_disk == meta
    assert meta["config"]["seed"] == 0
    assert meta["config"]["n_players"] == 3
    assert len(meta["heights"]) == 3
    assert meta["dropouts"] == []
    assert 0.0 < meta["max_cross_signature_dot"] < 1.0


def test_signatures_are_per_player(tmp_path):
    built = build_sequence(SMALL)
    d0, d1 = built.seq.frame_detections(0)[:2]
    p0 = built.det_players[0][0]
    part = 0
    # same player's vectors repeat across frames; different players differ
    for t in (1, 2):
        dets = built.seq.frame_detections(t)
        idx = built.det_players[t].index(p0)
        same = dets[idx].features.cells[part]
        assert set(same) == set(d0.features.cells[part])
        for cell, vec in same.items():
            assert np.array_equal(vec, d0.features.cells[part][cell])
    c0, c1 = d0.features.cells[part], d1.features.cells[part]
    assert set(c0) != set(c1) or any(
        not np.array_equal(c0[cell], c1[cell]) for cell in c0
    )


def test_write_images_renders_jerseys(tmp_path):
    import cv2

    cfg = SynthConfig(seed=0, n_players=2, n_frames=2, feat_dim=8, write_images=True)
    generate(cfg, tmp_path)
    files = sorted((tmp_path / "images").glob("*.png"))
    assert len(files) == 2
    img = cv2.imread(str(files[0]))[..., ::-1]
    assert img.shape == (1080, 1920, 3)
    assert tuple(img[0, 0]) == (193, 154, 107)  # floor corner


def test_config_validation():
    for kwargs in (
        {"motion": "orbit"},
        {"placement": "ring"},
        {"layer": "b7c1"},
        {"n_players": 0},
        {"feat_dim": 0},
        {"dropout_prob": 1.0},
        {"conf_range": (0.9, 0.2)},
        {"height_range": (0.0, 100.0)},
        {"swap_period": 0},
    ):
        with pytest.raises(ValueError):
            SynthConfig(**kwargs)


def test_template_covers_all_parts():
    built = build_sequence(SynthConfig(seed=0, n_players=1, n_frames=1, feat_dim=8))
    det = built.seq.frame_detections(0)[0]
    assert len(det.keypoints) == NUM_PARTS
    assert all(kp.present for kp in det.keypoints)
