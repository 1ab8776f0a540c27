#!/usr/bin/env python3
"""Benchmark the compiled matching kernels against the pure numpy fallback.

Generates packed synthetic frames shaped like a real scoring/evaluation
workload and times the two hot kernels plus an end-to-end scoring pass.

    python benchmarks/bench_kernels.py --frames 3600 --boxes 8 --repeats 3
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from distilcull import _kernels_py

try:
    from distilcull import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def make_packed(rng: np.random.Generator, n_frames: int, mean_boxes: float):
    counts = rng.poisson(mean_boxes, n_frames)
    total = int(counts.sum())
    offsets = np.zeros(n_frames + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    boxes = np.empty((total, 4))
    boxes[:, 0] = rng.uniform(0, 900, total)
    boxes[:, 1] = rng.uniform(0, 500, total)
    boxes[:, 2] = rng.uniform(10, 120, total)
    boxes[:, 3] = rng.uniform(10, 120, total)
    scores = rng.uniform(0, 1, total)
    classes = rng.integers(0, 4, total).astype(np.int64)
    return offsets, boxes, scores, classes


def time_call(fn, repeats: int) -> float:
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=3600)
    parser.add_argument("--boxes", type=float, default=8.0, help="mean boxes per frame")
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    t_off, t_boxes, t_scores, t_classes = make_packed(rng, args.frames, args.boxes)
    s_off, s_boxes, s_scores, s_classes = make_packed(rng, args.frames, args.boxes)

    # evaluation-shaped inputs: one class's candidates in global score order
    n_cand = int(0.3 * len(s_boxes))
    order = np.argsort(-s_scores[:n_cand], kind="stable")
    cand_slots = np.sort(rng.integers(0, args.frames, n_cand)).astype(np.int64)[order]
    cand_boxes = np.ascontiguousarray(s_boxes[:n_cand][order])

    backends = [("python", _kernels_py)]
    if _kernels_c is not None:
        backends.insert(0, ("compiled", _kernels_c))
    else:
        print("note: compiled extension not built; timing the fallback only")

    results: dict[str, dict[str, float]] = {}
    for name, mod in backends:
        counts_s = time_call(
            lambda m=mod: m.match_counts(
                t_off, t_boxes, t_scores, t_classes,
                s_off, s_boxes, s_scores, s_classes,
                0.5, 0.7, 0.5, True,
            ),
            args.repeats,
        )
        flags_s = time_call(
            lambda m=mod: m.pr_flags(cand_slots, cand_boxes, t_off, t_boxes, 0.5),
            args.repeats,
        )
        results[name] = {"match_counts": counts_s, "pr_flags": flags_s}

    total_boxes = len(t_boxes) + len(s_boxes)
    print(f"\n{args.frames} frames, ~{args.boxes} boxes/frame ({total_boxes} boxes total)\n")
    header = f"{'kernel':<14}" + "".join(f"{name:>12}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for kernel in ("match_counts", "pr_flags"):
        row = f"{kernel:<14}"
        for name, _ in backends:
            row += f"{results[name][kernel] * 1e3:>10.1f}ms"
        if len(backends) == 2:
            ratio = results["python"][kernel] / results["compiled"][kernel]
            row += f"{ratio:>9.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
