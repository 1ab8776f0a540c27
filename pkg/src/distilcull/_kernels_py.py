"""Pure-python (numpy) matching kernels; reference for the compiled backend.

Each function mirrors its counterpart in the `_kernels` extension operation
for operation, in the same floating-point evaluation order, so the two
backends produce bit-identical results and differ only in speed.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def _iou_row(box: np.ndarray, others: np.ndarray) -> np.ndarray:
    """IoU of one [x, y, w, h] box against each row of `others`."""
    iw = np.minimum(box[0] + box[2], others[:, 0] + others[:, 2]) - np.maximum(
        box[0], others[:, 0]
    )
    ih = np.minimum(box[1] + box[3], others[:, 1] + others[:, 3]) - np.maximum(
        box[1], others[:, 1]
    )
    hit = (iw > 0.0) & (ih > 0.0)
    inter = np.where(hit, iw * ih, 0.0)
    out = np.zeros(len(others), dtype=np.float64)
    union = box[2] * box[3] + others[:, 2] * others[:, 3] - inter
    np.divide(inter, union, out=out, where=hit)
    return out


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of two [x, y, w, h] box arrays, shape (len(a), len(b))."""
    out = np.zeros((len(boxes_a), len(boxes_b)), dtype=np.float64)
    for i in range(len(boxes_a)):
        out[i] = _iou_row(boxes_a[i], boxes_b)
    return out


def greedy_match(
    s_boxes: np.ndarray,
    s_classes: np.ndarray,
    t_boxes: np.ndarray,
    t_classes: np.ndarray,
    s_order: np.ndarray,
    iou_threshold: float,
    class_aware: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Greedily pair student boxes (taken in `s_order`) with teacher boxes.

    Each student box claims the still-unmatched teacher box of highest IoU
    >= iou_threshold; IoU ties go to the lower teacher index. Returns
    (student_idx, teacher_idx, iou) arrays in processing order.
    """
    nt = len(t_boxes)
    pair_s: list[int] = []
    pair_t: list[int] = []
    pair_iou: list[float] = []
    if nt and len(s_order):
        used = np.zeros(nt, dtype=bool)
        for s in s_order:
            row = _iou_row(s_boxes[s], t_boxes)
            best = -1
            best_iou = 0.0
            for t in range(nt):
                if used[t]:
                    continue
                if class_aware and s_classes[s] != t_classes[t]:
                    continue
                v = row[t]
                if v >= iou_threshold and v > best_iou:
                    best = t
                    best_iou = v
            if best >= 0:
                used[best] = True
                pair_s.append(int(s))
                pair_t.append(best)
                pair_iou.append(float(best_iou))
    return (
        np.asarray(pair_s, dtype=np.int64),
        np.asarray(pair_t, dtype=np.int64),
        np.asarray(pair_iou, dtype=np.float64),
    )


def match_counts(
    t_offsets: np.ndarray,
    t_boxes: np.ndarray,
    t_scores: np.ndarray,
    t_classes: np.ndarray,
    s_offsets: np.ndarray,
    s_boxes: np.ndarray,
    s_scores: np.ndarray,
    s_classes: np.ndarray,
    iou_threshold: float,
    teacher_score_threshold: float,
    student_score_threshold: float,
    class_aware: bool,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-frame (tp, fp, fn) over two packed streams with shared frames."""
    n_frames = len(t_offsets) - 1
    tp = np.zeros(n_frames, dtype=np.int64)
    fp = np.zeros(n_frames, dtype=np.int64)
    fn = np.zeros(n_frames, dtype=np.int64)
    for f in range(n_frames):
        t0, t1 = int(t_offsets[f]), int(t_offsets[f + 1])
        s0, s1 = int(s_offsets[f]), int(s_offsets[f + 1])
        t_keep = t0 + np.flatnonzero(t_scores[t0:t1] >= teacher_score_threshold)
        s_keep = s0 + np.flatnonzero(s_scores[s0:s1] >= student_score_threshold)
        order = np.argsort(-s_scores[s_keep], kind="stable")
        pairs, _, _ = greedy_match(
            s_boxes[s_keep],
            s_classes[s_keep],
            t_boxes[t_keep],
            t_classes[t_keep],
            order,
            iou_threshold,
            class_aware,
        )
        k = len(pairs)
        tp[f] = k
        fp[f] = len(s_keep) - k
        fn[f] = len(t_keep) - k
    return tp, fp, fn


def pr_flags(
    cand_slots: np.ndarray,
    cand_boxes: np.ndarray,
    gt_offsets: np.ndarray,
    gt_boxes: np.ndarray,
    iou_threshold: float,
) -> np.ndarray:
    """True-positive flag per candidate, candidates visited in given order.

    `cand_slots[m]` is the frame slot of candidate m; within a frame each
    ground-truth box can be claimed once, by the earliest candidate whose
    IoU clears the threshold (ties to the lower ground-truth index).
    """
    n_cand = len(cand_slots)
    used = np.zeros(len(gt_boxes), dtype=bool)
    flags = np.zeros(n_cand, dtype=np.uint8)
    for m in range(n_cand):
        f = int(cand_slots[m])
        g0, g1 = int(gt_offsets[f]), int(gt_offsets[f + 1])
        if g0 == g1:
            continue
        row = _iou_row(cand_boxes[m], gt_boxes[g0:g1])
        best = -1
        best_iou = 0.0
        for g in range(g0, g1):
            if used[g]:
                continue
            v = row[g - g0]
            if v >= iou_threshold and v > best_iou:
                best = g
                best_iou = v
        if best >= 0:
            used[best] = True
            flags[m] = 1
    return flags
