"""Frame consistency scoring, frame selection, and dataset compilation.

A frame's score grows with the disagreement between what the teacher
labelled and what the student predicted; frames the student already
reproduces score near zero and carry no training value. The two selection
strategies are `simple` (first n frames in stream order) and `dds` (the n
highest-scoring frames).
"""

from __future__ import annotations

from dataclasses import dataclass

from ._pack import pack_frames
from .backend import kernels
from .errors import UsageError, ValidationError
from .matching import MatchConfig
from .types import (
    ConfusionCounts,
    CuratedDataset,
    CurationProvenance,
    DatasetEntry,
    DetectionStream,
    frame_set_mismatch,
    merge_class_tables,
)

STRATEGY_SIMPLE = "simple"
STRATEGY_DDS = "dds"
STRATEGIES = (STRATEGY_SIMPLE, STRATEGY_DDS)


@dataclass(frozen=True, slots=True)
class ScoredFrame:
    """One frame's confusion counts and the consistency score they yield."""

    frame_index: int
    counts: ConfusionCounts
    l_train: float


@dataclass(frozen=True, slots=True)
class CurationConfig:
    """Matching thresholds plus the selection budget and strategy."""

    match: MatchConfig = MatchConfig()
    epsilon: float = 0.5
    n: int = 0
    strategy: str = STRATEGY_DDS

    def __post_init__(self):
        if not self.epsilon > 0:
            raise UsageError(f"epsilon must be > 0, got {self.epsilon!r}")
        if not isinstance(self.n, int) or isinstance(self.n, bool) or self.n < 0:
            raise UsageError(f"n must be an integer >= 0, got {self.n!r}")
        if self.strategy not in STRATEGIES:
            raise UsageError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")


@dataclass(frozen=True, slots=True)
class ScoreSet:
    """A scored stream pair as exchanged on disk between score and curate."""

    teacher: str
    student: str
    match: MatchConfig
    epsilon: float
    frames: tuple[ScoredFrame, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))


def l_train(counts: ConfusionCounts, epsilon: float = 0.5) -> float:
    """Per-frame teacher-student inconsistency; high means informative.

    (fp + tp)/(tp + epsilon) + (fn + tp)/(tp + epsilon): zero only for an
    empty, fully consistent frame, and strictly increasing in fp and fn.
    """
    if not epsilon > 0:
        raise UsageError(f"epsilon must be > 0, got {epsilon!r}")
    denom = counts.tp + epsilon
    return (counts.fp + counts.tp) / denom + (counts.fn + counts.tp) / denom


def score_stream(
    teacher: DetectionStream, student: DetectionStream, cfg: CurationConfig
) -> list[ScoredFrame]:
    """Score every shared frame, returned in ascending frame_index order.

    The two streams must cover the same frame_index set; a frame present
    on only one side is an error, not a maximal score, so a truncated
    detector output cannot masquerade as difficult data.
    """
    mismatch = frame_set_mismatch(teacher, student)
    if mismatch is not None:
        raise ValidationError(mismatch)
    _, student_map = merge_class_tables(teacher.class_table, student.class_table)
    t_frames = sorted(teacher.frames, key=lambda f: f.frame_index)
    s_frames = sorted(student.frames, key=lambda f: f.frame_index)
    t_pack = pack_frames(t_frames)
    s_pack = pack_frames(s_frames, class_map=student_map)
    tp, fp, fn = kernels.match_counts(
        t_pack.offsets, t_pack.boxes, t_pack.scores, t_pack.class_ids,
        s_pack.offsets, s_pack.boxes, s_pack.scores, s_pack.class_ids,
        cfg.match.iou_threshold,
        cfg.match.teacher_score_threshold,
        cfg.match.student_score_threshold,
        cfg.match.class_aware,
    )
    out: list[ScoredFrame] = []
    for i in range(t_pack.n_frames):
        counts = ConfusionCounts(int(tp[i]), int(fp[i]), int(fn[i]))
        out.append(
            ScoredFrame(int(t_pack.frame_index[i]), counts, l_train(counts, cfg.epsilon))
        )
    return out


def select_dds(scored: list[ScoredFrame], n: int) -> list[int]:
    """Frame ids of the n highest-scoring frames, in ascending id order.

    Score ties break toward the lower frame_index; n beyond the stream
    size returns every frame.
    """
    if n < 0:
        raise UsageError(f"n must be >= 0, got {n!r}")
    ranked = sorted(scored, key=lambda s: (-s.l_train, s.frame_index))
    return sorted(s.frame_index for s in ranked[:n])


def select_simple(scored: list[ScoredFrame], n: int) -> list[int]:
    """The first n frame ids in ascending frame_index order."""
    if n < 0:
        raise UsageError(f"n must be >= 0, got {n!r}")
    return sorted(s.frame_index for s in scored)[:n]


def select_frames(scored: list[ScoredFrame], cfg: CurationConfig) -> list[int]:
    """Dispatch to the strategy named in the config."""
    if cfg.strategy == STRATEGY_DDS:
        return select_dds(scored, cfg.n)
    return select_simple(scored, cfg.n)


def compile_dataset(
    selection: list[int],
    teacher: DetectionStream,
    scored: list[ScoredFrame],
    cfg: CurationConfig,
) -> CuratedDataset:
    """Assemble the curated dataset for the selected frames.

    Pseudo-labels are the teacher detections at or above the teacher score
    threshold; provenance records every knob that shaped the selection.
    """
    frames_by_index = {f.frame_index: f for f in teacher.frames}
    scores_by_index = {s.frame_index: s for s in scored}
    unknown = [
        i for i in selection if i not in frames_by_index or i not in scores_by_index
    ]
    if unknown:
        raise UsageError(f"selected frame_index not present in inputs: {unknown}")
    threshold = cfg.match.teacher_score_threshold
    entries = []
    for frame_index in sorted(selection):
        frame = frames_by_index[frame_index]
        labels = tuple(d for d in frame.detections if d.score >= threshold)
        entries.append(
            DatasetEntry(frame_index, frame.image_ref, labels, scores_by_index[frame_index].l_train)
        )
    provenance = CurationProvenance(
        teacher=teacher.source_id,
        strategy=cfg.strategy,
        n=cfg.n,
        teacher_score_threshold=threshold,
        student_score_threshold=cfg.match.student_score_threshold,
        iou_threshold=cfg.match.iou_threshold,
        epsilon=cfg.epsilon,
    )
    return CuratedDataset(provenance, teacher.class_table, tuple(entries))
