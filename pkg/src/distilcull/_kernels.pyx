# cython: language_level=3
# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled matching kernels; see _kernels_py for the reference versions.

Kept bit-identical to the pure backend: same IoU expression, same
comparison order, same tie rules, floats only combined in the same order.
"""

from libc.math cimport fmax, fmin

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef inline double _iou1(const double* a, const double* b) noexcept nogil:
    cdef double iw = fmin(a[0] + a[2], b[0] + b[2]) - fmax(a[0], b[0])
    if iw <= 0.0:
        return 0.0
    cdef double ih = fmin(a[1] + a[3], b[1] + b[3]) - fmax(a[1], b[1])
    if ih <= 0.0:
        return 0.0
    cdef double inter = iw * ih
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def iou_matrix(double[:, ::1] boxes_a, double[:, ::1] boxes_b):
    """Pairwise IoU of two [x, y, w, h] box arrays, shape (len(a), len(b))."""
    cdef Py_ssize_t na = boxes_a.shape[0]
    cdef Py_ssize_t nb = boxes_b.shape[0]
    out_arr = np.zeros((na, nb), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(na):
            for j in range(nb):
                out[i, j] = _iou1(&boxes_a[i, 0], &boxes_b[j, 0])
    return out_arr


cdef Py_ssize_t _greedy(
    const double* s_boxes, const cnp.int64_t* s_classes,
    const double* t_boxes, const cnp.int64_t* t_classes, Py_ssize_t nt,
    const cnp.int64_t* s_order, Py_ssize_t ns,
    double iou_threshold, bint class_aware,
    cnp.uint8_t* used, cnp.int64_t* pair_s, cnp.int64_t* pair_t,
    double* pair_iou,
) noexcept nogil:
    """Core greedy loop; returns the number of pairs written."""
    cdef Py_ssize_t k = 0, i, s, t, best
    cdef double v, best_iou
    for t in range(nt):
        used[t] = 0
    for i in range(ns):
        s = s_order[i]
        best = -1
        best_iou = 0.0
        for t in range(nt):
            if used[t]:
                continue
            if class_aware and s_classes[s] != t_classes[t]:
                continue
            v = _iou1(&s_boxes[4 * s], &t_boxes[4 * t])
            if v >= iou_threshold and v > best_iou:
                best = t
                best_iou = v
        if best >= 0:
            used[best] = 1
            pair_s[k] = s
            pair_t[k] = best
            pair_iou[k] = best_iou
            k += 1
    return k


def greedy_match(
    double[:, ::1] s_boxes,
    cnp.int64_t[::1] s_classes,
    double[:, ::1] t_boxes,
    cnp.int64_t[::1] t_classes,
    cnp.int64_t[::1] s_order,
    double iou_threshold,
    bint class_aware,
):
    """Greedily pair student boxes (taken in `s_order`) with teacher boxes.

    Each student box claims the still-unmatched teacher box of highest IoU
    >= iou_threshold; IoU ties go to the lower teacher index. Returns
    (student_idx, teacher_idx, iou) arrays in processing order.
    """
    cdef Py_ssize_t ns = s_order.shape[0]
    cdef Py_ssize_t nt = t_boxes.shape[0]
    cdef Py_ssize_t cap = ns if ns < nt else nt
    used_arr = np.zeros(nt, dtype=np.uint8)
    ps_arr = np.empty(cap, dtype=np.int64)
    pt_arr = np.empty(cap, dtype=np.int64)
    pi_arr = np.empty(cap, dtype=np.float64)
    cdef cnp.uint8_t[::1] used = used_arr
    cdef cnp.int64_t[::1] ps = ps_arr
    cdef cnp.int64_t[::1] pt = pt_arr
    cdef double[::1] pi = pi_arr
    cdef Py_ssize_t k = 0
    if cap > 0:
        with nogil:
            k = _greedy(
                &s_boxes[0, 0], &s_classes[0], &t_boxes[0, 0], &t_classes[0],
                nt, &s_order[0], ns, iou_threshold, class_aware,
                &used[0], &ps[0], &pt[0], &pi[0],
            )
    return ps_arr[:k].copy(), pt_arr[:k].copy(), pi_arr[:k].copy()


def match_counts(
    cnp.int64_t[::1] t_offsets,
    double[:, ::1] t_boxes,
    double[::1] t_scores,
    cnp.int64_t[::1] t_classes,
    cnp.int64_t[::1] s_offsets,
    double[:, ::1] s_boxes,
    double[::1] s_scores,
    cnp.int64_t[::1] s_classes,
    double iou_threshold,
    double teacher_score_threshold,
    double student_score_threshold,
    bint class_aware,
):
    """Per-frame (tp, fp, fn) over two packed streams with shared frames."""
    cdef Py_ssize_t n_frames = t_offsets.shape[0] - 1
    tp_arr = np.zeros(n_frames, dtype=np.int64)
    fp_arr = np.zeros(n_frames, dtype=np.int64)
    fn_arr = np.zeros(n_frames, dtype=np.int64)
    cdef cnp.int64_t[::1] tp = tp_arr
    cdef cnp.int64_t[::1] fp = fp_arr
    cdef cnp.int64_t[::1] fn = fn_arr

    cdef Py_ssize_t max_t = 0, max_s = 0, f, d
    for f in range(n_frames):
        d = t_offsets[f + 1] - t_offsets[f]
        if d > max_t:
            max_t = d
        d = s_offsets[f + 1] - s_offsets[f]
        if d > max_s:
            max_s = d

    cdef Py_ssize_t cap = max_t if max_t < max_s else max_s
    scratch_tk = np.empty(max(max_t, 1), dtype=np.int64)
    scratch_sk = np.empty(max(max_s, 1), dtype=np.int64)
    scratch_order = np.empty(max(max_s, 1), dtype=np.int64)
    scratch_used = np.empty(max(max_t, 1), dtype=np.uint8)
    scratch_ps = np.empty(max(cap, 1), dtype=np.int64)
    scratch_pt = np.empty(max(cap, 1), dtype=np.int64)
    scratch_pi = np.empty(max(cap, 1), dtype=np.float64)
    sb_arr = np.empty((max(max_s, 1), 4), dtype=np.float64)
    sc_arr = np.empty(max(max_s, 1), dtype=np.int64)
    ss_arr = np.empty(max(max_s, 1), dtype=np.float64)
    tb_arr = np.empty((max(max_t, 1), 4), dtype=np.float64)
    tc_arr = np.empty(max(max_t, 1), dtype=np.int64)

    cdef cnp.int64_t[::1] order = scratch_order
    cdef cnp.uint8_t[::1] used = scratch_used
    cdef cnp.int64_t[::1] ps = scratch_ps
    cdef cnp.int64_t[::1] pt = scratch_pt
    cdef double[::1] pi = scratch_pi
    cdef double[:, ::1] sb = sb_arr
    cdef cnp.int64_t[::1] sc = sc_arr
    cdef double[::1] ss = ss_arr
    cdef double[:, ::1] tb = tb_arr
    cdef cnp.int64_t[::1] tc = tc_arr

    cdef Py_ssize_t t0, t1, s0, s1, i, j, nt, ns, k
    cdef cnp.int64_t key
    cdef double key_score
    with nogil:
        for f in range(n_frames):
            t0 = t_offsets[f]
            t1 = t_offsets[f + 1]
            s0 = s_offsets[f]
            s1 = s_offsets[f + 1]
            nt = 0
            for i in range(t0, t1):
                if t_scores[i] >= teacher_score_threshold:
                    tb[nt, 0] = t_boxes[i, 0]
                    tb[nt, 1] = t_boxes[i, 1]
                    tb[nt, 2] = t_boxes[i, 2]
                    tb[nt, 3] = t_boxes[i, 3]
                    tc[nt] = t_classes[i]
                    nt += 1
            ns = 0
            for i in range(s0, s1):
                if s_scores[i] >= student_score_threshold:
                    sb[ns, 0] = s_boxes[i, 0]
                    sb[ns, 1] = s_boxes[i, 1]
                    sb[ns, 2] = s_boxes[i, 2]
                    sb[ns, 3] = s_boxes[i, 3]
                    sc[ns] = s_classes[i]
                    ss[ns] = s_scores[i]
                    ns += 1
            # descending score, stable in index: insertion sort
            for i in range(ns):
                order[i] = i
            for i in range(1, ns):
                key = order[i]
                key_score = ss[key]
                j = i - 1
                while j >= 0 and ss[order[j]] < key_score:
                    order[j + 1] = order[j]
                    j -= 1
                order[j + 1] = key
            k = 0
            if ns > 0 and nt > 0:
                k = _greedy(
                    &sb[0, 0], &sc[0], &tb[0, 0], &tc[0], nt,
                    &order[0], ns, iou_threshold, class_aware,
                    &used[0], &ps[0], &pt[0], &pi[0],
                )
            tp[f] = k
            fp[f] = ns - k
            fn[f] = nt - k
    return tp_arr, fp_arr, fn_arr


def pr_flags(
    cnp.int64_t[::1] cand_slots,
    double[:, ::1] cand_boxes,
    cnp.int64_t[::1] gt_offsets,
    double[:, ::1] gt_boxes,
    double iou_threshold,
):
    """True-positive flag per candidate, candidates visited in given order.

    `cand_slots[m]` is the frame slot of candidate m; within a frame each
    ground-truth box can be claimed once, by the earliest candidate whose
    IoU clears the threshold (ties to the lower ground-truth index).
    """
    cdef Py_ssize_t n_cand = cand_slots.shape[0]
    cdef Py_ssize_t n_gt = gt_boxes.shape[0]
    flags_arr = np.zeros(n_cand, dtype=np.uint8)
    used_arr = np.zeros(max(n_gt, 1), dtype=np.uint8)
    cdef cnp.uint8_t[::1] flags = flags_arr
    cdef cnp.uint8_t[::1] used = used_arr
    cdef Py_ssize_t m, g, g0, g1, best
    cdef double v, best_iou
    with nogil:
        for m in range(n_cand):
            g0 = gt_offsets[cand_slots[m]]
            g1 = gt_offsets[cand_slots[m] + 1]
            best = -1
            best_iou = 0.0
            for g in range(g0, g1):
                if used[g]:
                    continue
                v = _iou1(&cand_boxes[m, 0], &gt_boxes[g, 0])
                if v >= iou_threshold and v > best_iou:
                    best = g
                    best_iou = v
            if best >= 0:
                used[best] = 1
                flags[m] = 1
    return flags_arr
