"""Greedy teacher-student box matching within one frame.

The matching rule is the score-ordered greedy assignment used by standard
detection evaluation: student detections are visited in descending score
order and each claims the unmatched teacher box with the highest IoU above
the threshold. Multiple detections of one object therefore count as one
true positive plus false positives, never as several true positives.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend import kernels
from .errors import UsageError
from .types import BoundingBox, ConfusionCounts, Detection, FrameDetections


@dataclass(frozen=True, slots=True)
class MatchConfig:
    """Thresholds governing which detections participate and when they pair."""

    iou_threshold: float = 0.5
    teacher_score_threshold: float = 0.7
    student_score_threshold: float = 0.5
    class_aware: bool = True

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise UsageError(f"iou_threshold must be in (0, 1], got {self.iou_threshold!r}")
        for name in ("teacher_score_threshold", "student_score_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise UsageError(f"{name} must be in [0, 1], got {value!r}")


@dataclass(frozen=True, slots=True)
class MatchResult:
    """Outcome of matching one student frame against one teacher frame.

    Pair tuples are (student index, teacher index, iou), indices into the
    original detection lists; detections excluded by a score threshold
    appear in neither the pairs nor the unmatched lists.
    """

    pairs: tuple[tuple[int, int, float], ...]
    unmatched_student: tuple[int, ...]
    unmatched_teacher: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(self, "unmatched_student", tuple(self.unmatched_student))
        object.__setattr__(self, "unmatched_teacher", tuple(self.unmatched_teacher))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; exactly 0.0 for touching edges."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    if iw <= 0.0:
        return 0.0
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def _columns(dets: Sequence[Detection], keep: list[int]):
    boxes = np.empty((len(keep), 4), dtype=np.float64)
    scores = np.empty(len(keep), dtype=np.float64)
    classes = np.empty(len(keep), dtype=np.int64)
    for row, i in enumerate(keep):
        det = dets[i]
        boxes[row, 0] = det.box.x
        boxes[row, 1] = det.box.y
        boxes[row, 2] = det.box.w
        boxes[row, 3] = det.box.h
        scores[row] = det.score
        classes[row] = det.class_id
    return boxes, scores, classes


def match_frame(
    teacher: FrameDetections, student: FrameDetections, cfg: MatchConfig = MatchConfig()
) -> MatchResult:
    """Match one frame's student detections against its teacher detections.

    Detections below the respective score thresholds are excluded. The
    remaining student detections are processed in descending score order
    (ties by ascending index); each claims the unmatched teacher detection
    of highest IoU >= cfg.iou_threshold, same-class only when
    cfg.class_aware. Deterministic, including pair order.
    """
    if teacher.frame_index != student.frame_index:
        raise UsageError(
            f"frame_index mismatch: teacher {teacher.frame_index} vs "
            f"student {student.frame_index}"
        )
    t_keep = [
        i for i, d in enumerate(teacher.detections) if d.score >= cfg.teacher_score_threshold
    ]
    s_keep = [
        i for i, d in enumerate(student.detections) if d.score >= cfg.student_score_threshold
    ]
    t_boxes, _, t_classes = _columns(teacher.detections, t_keep)
    s_boxes, s_scores, s_classes = _columns(student.detections, s_keep)
    order = np.argsort(-s_scores, kind="stable").astype(np.int64)
    ps, pt, pi = kernels.greedy_match(
        s_boxes, s_classes, t_boxes, t_classes, order, cfg.iou_threshold, cfg.class_aware
    )
    pairs = tuple(
        (s_keep[int(a)], t_keep[int(b)], float(v)) for a, b, v in zip(ps, pt, pi)
    )
    matched_s = {int(a) for a in ps}
    matched_t = {int(b) for b in pt}
    unmatched_student = tuple(i for k, i in enumerate(s_keep) if k not in matched_s)
    unmatched_teacher = tuple(i for k, i in enumerate(t_keep) if k not in matched_t)
    return MatchResult(pairs, unmatched_student, unmatched_teacher)


def confusion_counts(result: MatchResult) -> ConfusionCounts:
    """Collapse a match result into the per-frame TP/FP/FN counts."""
    return ConfusionCounts(
        tp=len(result.pairs),
        fp=len(result.unmatched_student),
        fn=len(result.unmatched_teacher),
    )
