import dataclasses

import pytest

from conftest import det, frame, random_stream, stream
from distilcull.errors import ValidationError
from distilcull.evaluation import average_precision, pr_curve, relative_map
from distilcull.matching import MatchConfig
from distilcull.simulation import (
    DetectorProfile,
    DomainParams,
    generate_domain,
    simulate_detector,
    teacher_profile,
)
from distilcull.types import Detection
from oracles import naive_relative_map

CFG = MatchConfig()


def test_pr_curve_identical_streams_reaches_perfect_corner():
    labels = stream([frame(0, [det(0, 0, 10, 10, 0, 0.9), det(30, 0, 10, 10, 0, 0.8)])])
    curve = pr_curve(labels, labels, 0, CFG)
    assert curve[-1].recall == 1.0 and curve[-1].precision == 1.0
    assert average_precision(curve) == 1.0


def test_pr_curve_empty_candidate():
    labels = stream([frame(0, [det(0, 0, 10, 10, 0, 0.9)])])
    empty = stream([frame(0)])
    curve = pr_curve(empty, labels, 0, CFG)
    assert curve == []
    assert average_precision(curve) == 0.0


def test_pr_curve_class_without_ground_truth_is_empty():
    labels = stream([frame(0, [det(0, 0, 10, 10, 0, 0.9)])])
    candidate = stream([frame(0, [det(0, 0, 10, 10, 1, 0.9)])])
    assert pr_curve(candidate, labels, 1, CFG) == []


def test_false_positive_then_true_positive_curve_and_ap():
    labels = stream([frame(0, [det(0, 0, 10, 10, 0, 0.95)])])
    candidate = stream(
        [frame(0, [det(100, 100, 10, 10, 0, 0.9), det(0, 0, 10, 10, 0, 0.8)])]
    )
    curve = pr_curve(candidate, labels, 0, CFG)
    assert [(p.recall, p.precision) for p in curve] == [(0.0, 0.0), (1.0, 0.5)]
    assert average_precision(curve) == 0.5


def test_recall_non_decreasing_as_score_cut_drops(rng):
    for _ in range(30):
        labels = random_stream(rng, n_frames=4, score_low=0.7, score_high=1.0)
        candidate = _aligned_candidate(rng, labels)
        for class_id in range(len(labels.class_table)):
            curve = pr_curve(candidate, labels, class_id, CFG)
            recalls = [p.recall for p in curve]
            assert recalls == sorted(recalls)


def test_relative_map_self_is_hundred(rng):
    for _ in range(10):
        s = random_stream(rng, n_frames=5, score_low=0.7, score_high=1.0)
        if not any(f.detections for f in s.frames):
            continue
        report = relative_map(s, s, CFG)
        assert report.rmap == 100.0


def test_relative_map_zero_detections_is_zero():
    labels = stream([frame(0, [det(0, 0, 10, 10, 0, 0.9)]), frame(1, [det(5, 5, 8, 8, 1, 0.8)])])
    empty = stream([frame(0), frame(1)])
    report = relative_map(empty, labels, CFG)
    assert report.rmap == 0.0


def test_relative_map_requires_some_ground_truth():
    labels = stream([frame(0, [det(0, 0, 10, 10, 0, 0.3)])])  # all below threshold
    with pytest.raises(ValidationError, match="undefined"):
        relative_map(labels, labels, CFG)


def test_relative_map_requires_shared_frames():
    a = stream([frame(0, [det(0, 0, 5, 5, 0, 0.9)])])
    b = stream([frame(1, [det(0, 0, 5, 5, 0, 0.9)])])
    with pytest.raises(ValidationError, match="frame sets differ"):
        relative_map(a, b, CFG)


def test_classes_without_ground_truth_excluded_from_mean():
    labels = stream(
        [frame(0, [det(0, 0, 10, 10, 0, 0.9)])], class_table=("car", "person")
    )
    candidate = stream([frame(0, [det(0, 0, 10, 10, 0, 0.8)])], class_table=("car", "person"))
    report = relative_map(candidate, labels, CFG)
    assert set(report.per_class_ap) == {"car"}
    assert report.rmap == 100.0


def test_duplicate_detections_on_one_box_count_once():
    labels = stream([frame(0, [det(0, 0, 10, 10, 0, 0.9)])])
    dupes = [det(0, 0, 10, 10, 0, s) for s in (0.9, 0.8, 0.7)]
    candidate = stream([frame(0, dupes)])
    curve = pr_curve(candidate, labels, 0, CFG)
    assert [p.precision for p in curve] == [1.0, 0.5, pytest.approx(1 / 3)]
    assert average_precision(curve) == 1.0  # the top-ranked one is the true positive


def test_ap_invariant_under_monotone_score_transforms(rng):
    transforms = [lambda s: s * s, lambda s: 0.05 + 0.9 * s, lambda s: s / (1.0 + s)]
    for _ in range(25):
        labels = random_stream(rng, n_frames=4, score_low=0.7, score_high=1.0)
        if not any(f.detections for f in labels.frames):
            continue
        candidate = _aligned_candidate(rng, labels)
        base = relative_map(candidate, labels, CFG)
        for transform in transforms:
            rescored = _rescore(candidate, transform)
            assert relative_map(rescored, labels, CFG).rmap == base.rmap


def _aligned_candidate(rng, labels):
    candidate = random_stream(rng, n_frames=len(labels.frames), class_table=labels.class_table)
    frames = tuple(
        dataclasses.replace(f, frame_index=lf.frame_index)
        for f, lf in zip(candidate.frames, labels.frames)
    )
    return dataclasses.replace(candidate, frames=frames)


def _rescore(s, transform):
    frames = tuple(
        dataclasses.replace(
            f,
            detections=tuple(
                Detection(d.box, d.class_id, transform(d.score)) for d in f.detections
            ),
        )
        for f in s.frames
    )
    return dataclasses.replace(s, frames=frames)


def test_adding_false_positive_never_increases_ap(rng):
    for _ in range(25):
        labels = random_stream(rng, n_frames=3, score_low=0.7, score_high=1.0)
        if not any(f.detections for f in labels.frames):
            continue
        candidate = _aligned_candidate(rng, labels)
        base = relative_map(candidate, labels, CFG)
        spoiled_frames = list(candidate.frames)
        f0 = spoiled_frames[0]
        fp = det(900, 900, 5, 5, class_id=0, score=float(rng.uniform(0, 1)))
        spoiled_frames[0] = dataclasses.replace(f0, detections=f0.detections + (fp,))
        spoiled = dataclasses.replace(candidate, frames=tuple(spoiled_frames))
        after = relative_map(spoiled, labels, CFG)
        for name, ap in after.per_class_ap.items():
            assert ap <= base.per_class_ap[name] + 1e-12


def test_adding_top_rank_true_positive_never_decreases_ap(rng):
    for _ in range(25):
        labels = random_stream(rng, n_frames=3, score_low=0.7, score_high=1.0)
        gt_dets = [(f, d) for f in labels.frames for d in f.detections]
        if not gt_dets:
            continue
        candidate = _aligned_candidate(rng, labels)
        candidate = _rescore(candidate, lambda s: s * 0.98)  # leave headroom at the top
        base = relative_map(candidate, labels, CFG)
        target_frame, target = gt_dets[int(rng.integers(0, len(gt_dets)))]
        boosted = Detection(target.box, target.class_id, 1.0)
        frames = tuple(
            dataclasses.replace(f, detections=f.detections + (boosted,))
            if f.frame_index == target_frame.frame_index
            else f
            for f in candidate.frames
        )
        after = relative_map(dataclasses.replace(candidate, frames=frames), labels, CFG)
        name = labels.class_table[target.class_id]
        assert after.per_class_ap[name] >= base.per_class_ap[name] - 1e-12


def test_matches_independent_naive_evaluator_on_synthetic_domain():
    domain = generate_domain(3, DomainParams(num_frames=50, class_count=3))
    labels = simulate_detector(domain, teacher_profile(), 100, source_id="t")
    mid = DetectorProfile(recall_easy=0.7, recall_hard=0.4, fp_rate=1.0, localization_noise=4.0)
    candidate = simulate_detector(domain, mid, 200, source_id="s")
    report = relative_map(candidate, labels, CFG)
    expected_rmap, expected_per_class = naive_relative_map(candidate, labels, 0.5, 0.7)
    assert report.rmap == pytest.approx(expected_rmap, abs=1e-9)
    for name, ap in expected_per_class.items():
        assert report.per_class_ap[name] == pytest.approx(ap, abs=1e-9)


def test_naive_evaluator_oracle_on_random_streams(rng):
    for _ in range(20):
        labels = random_stream(rng, n_frames=int(rng.integers(1, 6)), score_low=0.6, score_high=1.0)
        if not any(d.score >= 0.7 for f in labels.frames for d in f.detections):
            continue
        candidate = _aligned_candidate(rng, labels)
        report = relative_map(candidate, labels, CFG)
        expected_rmap, _ = naive_relative_map(candidate, labels, 0.5, 0.7)
        assert report.rmap == pytest.approx(expected_rmap, abs=1e-9)


def test_report_serialization_shape():
    labels = stream([frame(0, [det(0, 0, 10, 10, 0, 0.9)])])
    report = relative_map(labels, labels, CFG)
    doc = report.to_json_dict()
    assert set(doc) == {"rmap", "per_class", "config"}
    assert doc["config"]["iou_threshold"] == 0.5
