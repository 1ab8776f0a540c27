"""Shared vocabulary for detection streams and curated datasets.

Everything here is an immutable value object: safe to share between
threads and safe to use as a fixture. Construction never validates field
contents; `validate_stream` reports every invariant violation instead of
stopping at the first one, which is what file readers need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import UsageError


@dataclass(frozen=True, slots=True)
class BoundingBox:
    """Axis-aligned box: top-left corner plus size, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True, slots=True)
class Detection:
    """One scored, class-labelled box emitted by a detector.

    `class_id` indexes the class table of the stream the detection belongs
    to; class names only exist at the serialization boundary.
    """

    box: BoundingBox
    class_id: int
    score: float


@dataclass(frozen=True, slots=True)
class FrameDetections:
    """All detections one model produced for one image."""

    frame_index: int
    image_ref: str
    detections: tuple[Detection, ...]

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))


@dataclass(frozen=True, slots=True)
class DetectionStream:
    """Ordered per-frame detections from one model over one image sequence."""

    source_id: str
    class_table: tuple[str, ...]
    frames: tuple[FrameDetections, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_table", tuple(self.class_table))
        object.__setattr__(self, "frames", tuple(self.frames))

    @property
    def frame_indices(self) -> tuple[int, ...]:
        return tuple(f.frame_index for f in self.frames)


@dataclass(frozen=True, slots=True)
class ConfusionCounts:
    """Per-frame true-positive / false-positive / false-negative box counts."""

    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if self.tp < 0 or self.fp < 0 or self.fn < 0:
            raise UsageError(f"confusion counts must be non-negative, got {self}")


@dataclass(frozen=True, slots=True)
class DatasetEntry:
    """One curated frame: its pseudo-labels and the score that selected it."""

    frame_index: int
    image_ref: str
    pseudo_labels: tuple[Detection, ...]
    l_train: float

    def __post_init__(self):
        object.__setattr__(self, "pseudo_labels", tuple(self.pseudo_labels))


@dataclass(frozen=True, slots=True)
class CurationProvenance:
    """Everything needed to reproduce a curated dataset from its streams."""

    teacher: str
    strategy: str
    n: int
    teacher_score_threshold: float
    student_score_threshold: float
    iou_threshold: float
    epsilon: float


@dataclass(frozen=True, slots=True)
class CuratedDataset:
    """Selected frames plus teacher pseudo-labels and provenance."""

    provenance: CurationProvenance
    class_table: tuple[str, ...]
    entries: tuple[DatasetEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_table", tuple(self.class_table))
        object.__setattr__(self, "entries", tuple(self.entries))


def _is_real(value) -> bool:
    return (
        isinstance(value, (int, float))
        and not isinstance(value, bool)
        and math.isfinite(value)
    )


def validate_stream(stream: DetectionStream) -> list[str]:
    """Check every stream invariant and describe each violation found.

    Returns an empty list iff the stream is valid. Never raises: validation
    reports, it does not abort. Each message names the offending frame and
    field.
    """
    problems: list[str] = []
    n_classes = len(stream.class_table)
    last_index: int | None = None
    for pos, frame in enumerate(stream.frames):
        fi = frame.frame_index
        where = f"frame {fi}" if isinstance(fi, int) else f"frames[{pos}]"
        if not isinstance(fi, int) or isinstance(fi, bool) or fi < 0:
            problems.append(f"frames[{pos}]: frame_index {fi!r} must be an integer >= 0")
        else:
            if last_index is not None and fi <= last_index:
                problems.append(
                    f"frames[{pos}]: frame_index {fi} must be strictly ascending "
                    f"(previous frame_index {last_index})"
                )
            last_index = fi
        for j, det in enumerate(frame.detections):
            tag = f"{where}: detections[{j}]"
            cid = det.class_id
            if not isinstance(cid, int) or isinstance(cid, bool) or not 0 <= cid < n_classes:
                problems.append(
                    f"{tag}: class_id {cid!r} not in class_table of size {n_classes}"
                )
            if not _is_real(det.score) or not 0.0 <= det.score <= 1.0:
                problems.append(f"{tag}: score {det.score!r} must be a finite number in [0, 1]")
            box = det.box
            for field_name in ("x", "y", "w", "h"):
                value = getattr(box, field_name)
                if not _is_real(value):
                    problems.append(f"{tag}: bbox {field_name} {value!r} must be finite")
            if _is_real(box.w) and box.w <= 0:
                problems.append(f"{tag}: bbox w {box.w!r} violates w > 0")
            if _is_real(box.h) and box.h <= 0:
                problems.append(f"{tag}: bbox h {box.h!r} violates h > 0")
    return problems


def merge_class_tables(
    primary: Sequence[str], secondary: Sequence[str]
) -> tuple[tuple[str, ...], list[int]]:
    """Union of two class tables, resolved by name (case-sensitive).

    Names from `primary` keep their ids; names appearing only in
    `secondary` are appended in their original order. Returns the merged
    table and a mapping from each secondary id to its merged id, so
    detections of classes the two models do not share can never be
    matched to each other by id equality.
    """
    merged = list(primary)
    index: dict[str, int] = {}
    for i, name in enumerate(merged):
        index.setdefault(name, i)
    mapping: list[int] = []
    for name in secondary:
        if name not in index:
            index[name] = len(merged)
            merged.append(name)
        mapping.append(index[name])
    return tuple(merged), mapping


def frame_set_mismatch(a: DetectionStream, b: DetectionStream) -> str | None:
    """Describe how the two streams' frame_index sets differ, or None."""
    sa = {f.frame_index for f in a.frames}
    sb = {f.frame_index for f in b.frames}
    if sa == sb:
        return None
    only_a = sorted(sa - sb)
    only_b = sorted(sb - sa)
    parts = []
    if only_a:
        parts.append(f"missing from '{b.source_id}': {_abbrev(only_a)}")
    if only_b:
        parts.append(f"missing from '{a.source_id}': {_abbrev(only_b)}")
    return "frame sets differ: " + "; ".join(parts)


def _abbrev(indices: Iterable[int], limit: int = 12) -> str:
    items = list(indices)
    shown = ", ".join(str(i) for i in items[:limit])
    if len(items) > limit:
        shown += f", ... ({len(items)} total)"
    return shown
