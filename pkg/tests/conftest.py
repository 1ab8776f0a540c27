from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from distilcull.types import BoundingBox, Detection, DetectionStream, FrameDetections


def det(x, y, w, h, class_id=0, score=0.9) -> Detection:
    return Detection(BoundingBox(float(x), float(y), float(w), float(h)), class_id, score)


def frame(index, detections=(), image_ref=None) -> FrameDetections:
    return FrameDetections(index, image_ref or f"img/{index:04d}.jpg", tuple(detections))


def stream(frames, class_table=("car", "person"), source_id="test") -> DetectionStream:
    return DetectionStream(source_id, tuple(class_table), tuple(frames))


def random_stream(
    rng: np.random.Generator,
    *,
    source_id: str = "rand",
    class_table=("car", "person", "bus"),
    n_frames: int | None = None,
    max_frames: int = 8,
    max_dets: int = 5,
    score_low: float = 0.0,
    score_high: float = 1.0,
    frame_start: int = 0,
) -> DetectionStream:
    if n_frames is None:
        n_frames = int(rng.integers(0, max_frames + 1))
    frames = []
    index = frame_start
    for _ in range(n_frames):
        index += int(rng.integers(0, 3))  # occasionally leave gaps
        dets = []
        for _ in range(int(rng.integers(0, max_dets + 1))):
            dets.append(
                Detection(
                    BoundingBox(
                        float(rng.uniform(0, 200)),
                        float(rng.uniform(0, 200)),
                        float(rng.uniform(0.5, 90)),
                        float(rng.uniform(0.5, 90)),
                    ),
                    int(rng.integers(0, len(class_table))),
                    float(rng.uniform(score_low, score_high)),
                )
            )
        frames.append(frame(index, dets))
        index += 1
    return stream(frames, class_table=class_table, source_id=source_id)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
