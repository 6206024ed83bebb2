"""Association resolution, exhaustive audit, and the tracking engine."""

from __future__ import annotations

import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from courttrack.features import (
    PartFeatureSet,
    TrackerConfig,
    combined_cost_detailed,
    gather_part_cells,
)
from courttrack.features import LAYERS, MissingFeatures
from courttrack.matcher import (
    AssocEntry,
    TooLarge,
    TrackState,
    _DetData,
    _pair_cost,
    brute_force_assignment,
    build_assoc,
    match_frame,
    resolve_conflicts,
    track_sequence,
)
from courttrack.model import FrameMeta, Sequence
from courttrack.synth import SynthConfig, build_sequence

from conftest import make_detection


def test_build_assoc_single_column():
    entries = build_assoc(np.array([[0.7]]))
    assert entries == [AssocEntry(0, 0, 0.7)]
    assert entries[0].second_col is None


def test_build_assoc_orders_best_and_second():
    entries = build_assoc(np.array([[0.5, 0.2, 0.9]]))
    e = entries[0]
    assert (e.best_col, e.best_cost) == (1, 0.2)
    assert (e.second_col, e.second_cost) == (0, 0.5)


def test_build_assoc_breaks_ties_toward_lower_index():
    e = build_assoc(np.array([[0.4, 0.4]]))[0]
    assert e.best_col == 0
    assert e.second_col == 1


def test_build_assoc_empty():
    assert build_assoc(np.zeros((0, 3))) == []


def test_resolve_relative_rule_with_loser_fallback():
    costs = np.array([[0.10, 0.60], [0.50, 0.55]])
    # 0.10 undercuts 0.50 by far more than the dominance factor
    assert resolve_conflicts(build_assoc(costs)) == {0: 0, 1: 1}


def test_resolve_margin_rule():
    costs = np.array([[0.30, 0.70], [0.31, 0.36]])
    # neither claim dominates; row 0's margin 0.40 beats row 1's 0.05
    assert resolve_conflicts(build_assoc(costs)) == {0: 0, 1: 1}


def test_resolve_margin_tie_prefers_cheaper_claim():
    costs = np.array([[0.50, 0.80], [0.48, 0.78]])
    assert resolve_conflicts(build_assoc(costs)) == {1: 0, 0: 1}


def test_resolve_full_tie_prefers_lower_row():
    costs = np.array([[0.50, 0.80], [0.50, 0.80]])
    assert resolve_conflicts(build_assoc(costs)) == {0: 0, 1: 1}


def test_resolve_diagonal_dominant_is_identity():
    costs = np.array(
        [[0.05, 0.9, 0.8], [0.7, 0.06, 0.95], [0.85, 0.9, 0.04]]
    )
    assert resolve_conflicts(build_assoc(costs)) == {0: 0, 1: 1, 2: 2}


def test_resolve_can_leave_rows_unassigned():
    # both rows want the only column; the loser has nowhere to go
    assert resolve_conflicts(build_assoc(np.array([[0.1], [0.2]]))) == {0: 0}


@given(
    st.integers(0, 10_000),
    st.integers(2, 6),
    st.integers(1, 6),
    st.integers(-3, 3),
)
def test_resolve_is_invariant_under_power_of_two_scaling(seed, rows, cols, k):
    # exact scaling keeps every comparison, product, and margin intact
    costs = np.random.default_rng(seed).uniform(0.01, 1.0, size=(rows, cols))
    base = resolve_conflicts(build_assoc(costs))
    scaled = resolve_conflicts(build_assoc(costs * 2.0**k))
    assert base == scaled


def test_brute_force_prefers_global_optimum():
    assert brute_force_assignment(np.array([[1.0, 2.0], [2.0, 100.0]])) == {0: 1, 1: 0}


def test_brute_force_anti_diagonal():
    costs = np.array([[0.9, 0.1], [0.1, 0.9]])
    assert brute_force_assignment(costs) == {0: 1, 1: 0}


def test_brute_force_matches_manual_three_by_three():
    costs = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
    # optimum: 1 + 2 + 2 picking (0,1), (1,0), (2,2)
    assert brute_force_assignment(costs) == {0: 1, 1: 0, 2: 2}


def test_brute_force_rectangular_both_ways():
    wide = np.array([[5.0, 1.0, 9.0], [2.0, 8.0, 3.0]])
    assert brute_force_assignment(wide) == {0: 1, 1: 0}
    tall = np.array([[5.0, 2.0], [1.0, 8.0], [9.0, 3.0]])
    assert brute_force_assignment(tall) == {1: 0, 0: 1}


def test_brute_force_tie_is_first_enumeration():
    assert brute_force_assignment(np.zeros((2, 2))) == {0: 0, 1: 1}


def test_brute_force_size_limit():
    with pytest.raises(TooLarge):
        brute_force_assignment(np.zeros((9, 2)))
    assert brute_force_assignment(np.zeros((0, 3))) == {}


def test_match_frame_first_frame_hands_out_fresh_ids():
    state = TrackState()
    assert match_frame(3, None, [], None, [], state) == [0, 1, 2]
    assert state.next_id == 3


def test_match_frame_fresh_ids_continue_the_counter():
    state = TrackState(next_id=5)
    assert match_frame(2, None, [], None, [], state) == [5, 6]


def test_match_frame_recovers_from_older_bank():
    # the track skipped one frame: only the age-2 bank knows it
    state = TrackState(next_id=10)
    labels = match_frame(1, None, [], np.array([[0.1]]), [4], state)
    assert labels == [4]


def test_match_frame_gate_rejects_costly_matches():
    state = TrackState()
    labels = match_frame(1, np.array([[0.9]]), [3], None, [], state, cost_gate=0.5)
    assert labels == [0]


def test_match_frame_prefers_fresher_bank_on_cost_ties():
    state = TrackState()
    labels = match_frame(
        1, np.array([[0.3]]), [5], np.array([[0.3]]), [9], state
    )
    assert labels == [5]


def test_match_frame_labels_are_granted_once():
    state = TrackState()
    costs1 = np.array([[0.1], [0.8]])
    labels = match_frame(2, costs1, [7], None, [], state)
    # both rows resolve to label 7; the cheaper row keeps it
    assert labels[0] == 7
    assert labels[1] == 0


def _static_players(xs, n_frames, drop=None):
    frames = [FrameMeta(t, 1920, 1080) for t in range(n_frames)]
    dets = {}
    for t in range(n_frames):
        row = []
        for i, x in enumerate(xs):
            if drop == (t, i):
                continue
            row.append(
                make_detection(
                    {0: (x, 200.0), 8: (x, 300.0)}, frame_id=t, det_id=len(row)
                )
            )
        dets[t] = row
    return Sequence(frames=frames, detections=dets)


def test_track_sequence_single_player_single_id():
    seq = _static_players([500.0], 5)
    result = track_sequence(seq, TrackerConfig(alpha=1.0))
    assert result.n_tracks == 1
    assert all(result.assignments[t] == [0] for t in range(5))


def test_track_sequence_keeps_labels_stable():
    seq = _static_players([100.0, 400.0, 700.0, 1000.0], 6)
    result = track_sequence(seq, TrackerConfig(alpha=1.0))
    assert result.n_tracks == 4
    first = result.assignments[0]
    assert sorted(first) == [0, 1, 2, 3]
    for t in range(1, 6):
        assert result.assignments[t] == first


def test_track_sequence_recovers_one_frame_dropout():
    seq = _static_players([100.0, 400.0, 700.0, 1000.0], 6, drop=(3, 2))
    result = track_sequence(seq, TrackerConfig(alpha=1.0))
    assert result.n_tracks == 4
    label = result.assignments[2][2]
    assert result.assignments[4][2] == label
    assert len(result.assignments[3]) == 3


def test_track_sequence_counts_fallback_pairs():
    frames = [FrameMeta(t, 1920, 1080) for t in range(2)]
    pfs = PartFeatureSet(LAYERS["b4c2"], 4, {})
    a = make_detection({0: (100.0, 100.0), 8: (100.0, 180.0)}, frame_id=0)
    b = make_detection({2: (100.0, 100.0), 9: (100.0, 180.0)}, frame_id=1)
    seq = Sequence(
        frames=frames,
        detections={0: [a.with_features(pfs)], 1: [b.with_features(pfs)]},
    )
    result = track_sequence(seq, TrackerConfig(alpha=0.5))
    assert result.fallbacks == 1


def test_track_sequence_deep_requires_features():
    seq = _static_players([500.0], 2)
    with pytest.raises(MissingFeatures):
        track_sequence(seq, TrackerConfig(alpha=0.5))


def test_track_sequence_stabilize_needs_homographies():
    seq = _static_players([500.0], 2)
    with pytest.raises(ValueError):
        track_sequence(seq, TrackerConfig(alpha=1.0, stabilize=True))


def test_track_sequence_warns_on_signal_free_config(caplog):
    built = build_sequence(SynthConfig(seed=1, n_players=2, n_frames=2, feat_dim=8))
    cfg = TrackerConfig(alpha=0.0, neighborhood=1)
    with caplog.at_level(logging.WARNING, logger="courttrack.matcher"):
        track_sequence(built.seq, cfg)
    assert "no signal" in caplog.text


def test_engine_pair_cost_matches_scalar_blend():
    built = build_sequence(SynthConfig(seed=2, n_players=4, n_frames=5, feat_dim=16))
    cfg = TrackerConfig(alpha=0.5, neighborhood=2)
    seq = built.seq
    subset = set(cfg.part_subset)

    def precompute(det):
        parts = frozenset(
            k
            for k in subset
            if det.keypoints[k].present and det.keypoints[k].conf >= cfg.conf_threshold
        )
        return _DetData(
            det=det,
            centroid=det.bbox.center,
            parts=parts,
            gathered=gather_part_cells(det, cfg),
        )

    for t in range(1, 5):
        frame = seq.frames[t]
        for a in seq.frame_detections(t):
            for b in seq.frame_detections(t - 1):
                fast, fell = _pair_cost(precompute(a), precompute(b), frame, cfg, None, None)
                slow = combined_cost_detailed(a, b, cfg, frame)
                assert fast == slow.total
                assert fell == slow.fell_back
