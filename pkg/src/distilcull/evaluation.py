"""Per-class average precision and relative mAP against teacher labels.

Ground truth is the teacher stream thresholded at the teacher score
threshold; candidate detections are never score-filtered, so only their
ranking matters and any strictly monotone rescoring leaves AP unchanged.
AP uses all-point interpolation: the area under the precision envelope,
where the envelope at recall r is the best precision at any recall >= r.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._pack import PackedFrames, pack_frames
from .backend import kernels
from .errors import ValidationError
from .matching import MatchConfig
from .types import DetectionStream, frame_set_mismatch, merge_class_tables


@dataclass(frozen=True, slots=True)
class PRPoint:
    """Cumulative recall/precision after accepting everything down to score_cut."""

    recall: float
    precision: float
    score_cut: float


@dataclass(frozen=True, slots=True)
class EvalReport:
    """Per-class APs and their mean scaled to [0, 100].

    Only classes with at least one ground-truth box contribute; a class
    the labels never contain is skipped rather than scored zero.
    """

    per_class_ap: dict[str, float]
    rmap: float
    config: MatchConfig

    def to_json_dict(self) -> dict:
        return {
            "rmap": self.rmap,
            "per_class": dict(self.per_class_ap),
            "config": {
                "iou_threshold": self.config.iou_threshold,
                "teacher_score_threshold": self.config.teacher_score_threshold,
                "student_score_threshold": self.config.student_score_threshold,
                "class_aware": self.config.class_aware,
            },
        }


def _offsets_for(slots: np.ndarray, n_frames: int) -> np.ndarray:
    counts = np.bincount(slots, minlength=n_frames)
    offsets = np.zeros(n_frames + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets


def _class_pr_arrays(
    cand: PackedFrames, gt: PackedFrames, class_id: int, iou_threshold: float
):
    """(recall, precision, score_cut) arrays for one class.

    Returns None when the class has no ground truth (AP undefined there);
    empty arrays when it has ground truth but no candidate detections.
    """
    gt_sel = np.flatnonzero(gt.class_ids == class_id)
    n_gt = gt_sel.size
    if n_gt == 0:
        return None
    n_frames = gt.n_frames
    gt_offsets = _offsets_for(gt.frame_slot[gt_sel], n_frames)
    gt_boxes = np.ascontiguousarray(gt.boxes[gt_sel])

    c_sel = np.flatnonzero(cand.class_ids == class_id)
    if c_sel.size == 0:
        empty = np.empty(0, dtype=np.float64)
        return empty, empty.copy(), empty.copy()
    scores = cand.scores[c_sel]
    slots = cand.frame_slot[c_sel]
    pos_in_frame = c_sel - cand.offsets[slots]
    # descending score, ties by frame then by detection position
    order = np.lexsort((pos_in_frame, slots, -scores))
    ordered = c_sel[order]
    flags = kernels.pr_flags(
        slots[order].astype(np.int64),
        np.ascontiguousarray(cand.boxes[ordered]),
        gt_offsets,
        gt_boxes,
        iou_threshold,
    )
    tp_cum = np.cumsum(flags, dtype=np.float64)
    precision = tp_cum / np.arange(1, len(flags) + 1, dtype=np.float64)
    recall = tp_cum / float(n_gt)
    return recall, precision, scores[order]


def _ap(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the all-point-interpolated precision envelope."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    step = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[step + 1] - mrec[step]) * mpre[step + 1]))


def _require_same_frames(a: DetectionStream, b: DetectionStream) -> None:
    mismatch = frame_set_mismatch(a, b)
    if mismatch is not None:
        raise ValidationError(mismatch)


def _packed_pair(candidate: DetectionStream, labels: DetectionStream, cfg: MatchConfig):
    """Pack both streams onto the merged class table, labels thresholded."""
    merged, cand_map = merge_class_tables(labels.class_table, candidate.class_table)
    l_frames = sorted(labels.frames, key=lambda f: f.frame_index)
    c_frames = sorted(candidate.frames, key=lambda f: f.frame_index)
    gt = pack_frames(l_frames)
    gt = gt.filtered(gt.scores >= cfg.teacher_score_threshold)
    cand = pack_frames(c_frames, class_map=cand_map)
    return merged, cand, gt


def pr_curve(
    candidate: DetectionStream,
    labels: DetectionStream,
    class_id: int,
    cfg: MatchConfig = MatchConfig(),
) -> list[PRPoint]:
    """Precision-recall points for one class, one point per candidate box.

    `class_id` indexes the merged class table: label-stream classes keep
    their ids, candidate-only class names are appended after them. A class
    with zero ground-truth boxes yields an empty curve (AP undefined).
    """
    _require_same_frames(candidate, labels)
    _, cand, gt = _packed_pair(candidate, labels, cfg)
    arrays = _class_pr_arrays(cand, gt, class_id, cfg.iou_threshold)
    if arrays is None:
        return []
    recall, precision, cuts = arrays
    return [
        PRPoint(float(r), float(p), float(s)) for r, p, s in zip(recall, precision, cuts)
    ]


def average_precision(curve: list[PRPoint]) -> float:
    """AP of a pr_curve output; an empty curve scores 0.0."""
    if not curve:
        return 0.0
    recall = np.array([p.recall for p in curve], dtype=np.float64)
    precision = np.array([p.precision for p in curve], dtype=np.float64)
    return _ap(recall, precision)


def relative_map(
    student: DetectionStream, teacher: DetectionStream, cfg: MatchConfig = MatchConfig()
) -> EvalReport:
    """Mean AP of the student against thresholded teacher labels, in [0, 100].

    Classes without any ground-truth box are excluded from the mean; a
    stream pair with no labelled class at all has no defined value and
    raises a validation error.
    """
    _require_same_frames(student, teacher)
    merged, cand, gt = _packed_pair(student, teacher, cfg)
    per_class: dict[str, float] = {}
    for class_id, name in enumerate(merged):
        arrays = _class_pr_arrays(cand, gt, class_id, cfg.iou_threshold)
        if arrays is None:
            continue
        recall, precision, _ = arrays
        per_class[name] = _ap(recall, precision)
    if not per_class:
        raise ValidationError(
            "no class has ground-truth boxes above the teacher score threshold; "
            "relative mAP is undefined"
        )
    rmap = 100.0 * (sum(per_class.values()) / len(per_class))
    return EvalReport(per_class, rmap, cfg)
