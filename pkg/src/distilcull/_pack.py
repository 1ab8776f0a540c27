"""Column-packed detection arrays, the form the matching kernels consume."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .types import FrameDetections


@dataclass(frozen=True)
class PackedFrames:
    """Detections of many frames flattened into contiguous columns.

    Frame f owns rows offsets[f]:offsets[f+1]; `frame_slot` maps each row
    back to its frame position.
    """

    frame_index: np.ndarray  # (F,) int64
    offsets: np.ndarray      # (F+1,) int64
    boxes: np.ndarray        # (N, 4) float64, [x, y, w, h]
    scores: np.ndarray       # (N,) float64
    class_ids: np.ndarray    # (N,) int64
    frame_slot: np.ndarray   # (N,) int64

    @property
    def n_frames(self) -> int:
        return len(self.frame_index)

    def filtered(self, keep: np.ndarray) -> "PackedFrames":
        """Subset of rows selected by the boolean mask, offsets recomputed."""
        sel = np.flatnonzero(keep)
        slots = self.frame_slot[sel]
        counts = np.bincount(slots, minlength=self.n_frames)
        offsets = np.zeros(self.n_frames + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return PackedFrames(
            frame_index=self.frame_index,
            offsets=offsets,
            boxes=np.ascontiguousarray(self.boxes[sel]),
            scores=self.scores[sel],
            class_ids=self.class_ids[sel],
            frame_slot=slots,
        )


def pack_frames(
    frames: Sequence[FrameDetections], class_map: Sequence[int] | None = None
) -> PackedFrames:
    """Flatten frames into a PackedFrames, optionally remapping class ids."""
    n_frames = len(frames)
    counts = np.fromiter((len(f.detections) for f in frames), np.int64, count=n_frames)
    offsets = np.zeros(n_frames + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    total = int(offsets[-1])
    frame_index = np.fromiter((f.frame_index for f in frames), np.int64, count=n_frames)
    boxes = np.empty((total, 4), dtype=np.float64)
    scores = np.empty(total, dtype=np.float64)
    class_ids = np.empty(total, dtype=np.int64)
    i = 0
    for frame in frames:
        for det in frame.detections:
            box = det.box
            boxes[i, 0] = box.x
            boxes[i, 1] = box.y
            boxes[i, 2] = box.w
            boxes[i, 3] = box.h
            scores[i] = det.score
            class_ids[i] = det.class_id
            i += 1
    if class_map is not None:
        class_ids = np.asarray(class_map, dtype=np.int64)[class_ids]
    frame_slot = np.repeat(np.arange(n_frames, dtype=np.int64), counts)
    return PackedFrames(frame_index, offsets, boxes, scores, class_ids, frame_slot)
