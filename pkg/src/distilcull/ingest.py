"""Bit-exact reading and writing of stream, manifest, and score files.

All formats are UTF-8 JSON guarded by a schema_version field. Parsing is
total: any byte sequence yields either a value or a structured error,
never a crash, and validation reports every violation it can find in one
pass. Writing then parsing any valid value reproduces it field for field;
floats are serialized with Python's shortest round-trip representation.
"""

from __future__ import annotations

import json
import math

from .curation import CurationConfig, ScoredFrame, ScoreSet, STRATEGIES, l_train
from .errors import ParseError, UnsupportedVersionError, UsageError, ValidationError
from .matching import MatchConfig
from .types import (
    BoundingBox,
    ConfusionCounts,
    CuratedDataset,
    CurationProvenance,
    DatasetEntry,
    Detection,
    DetectionStream,
    FrameDetections,
    validate_stream,
)

SCHEMA_VERSION = "distilcull/1"


# --- shared plumbing ---------------------------------------------------------

def _decode(data: bytes | str) -> str:
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(
            f"not valid UTF-8 at byte {exc.start}: {exc.reason}", byte_offset=exc.start
        ) from exc


def _load_json(data: bytes | str):
    text = _decode(data)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(
            f"malformed JSON at byte {offset} (line {exc.lineno}, column {exc.colno}): {exc.msg}",
            byte_offset=offset,
        ) from exc


def _check_version(doc, expected_kind: str):
    if not isinstance(doc, dict):
        raise ValidationError(f"{expected_kind} document must be a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UnsupportedVersionError(
            f"unsupported schema_version {version!r}, this build reads {SCHEMA_VERSION!r}"
        )


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _dump(doc, compact: bool) -> bytes:
    if compact:
        text = json.dumps(doc, allow_nan=False, separators=(",", ":"))
    else:
        text = json.dumps(doc, allow_nan=False, indent=2)
    return (text + "\n").encode("utf-8")


def _parse_detection(obj, where: str, class_ids: dict[str, int], problems: list[str]):
    if not isinstance(obj, dict):
        problems.append(f"{where}: detection must be an object, got {type(obj).__name__}")
        return None
    name = obj.get("class")
    score = obj.get("score")
    bbox = obj.get("bbox")
    ok = True
    if not isinstance(name, str) or name not in class_ids:
        problems.append(f"{where}: class {name!r} not in class_table")
        ok = False
    if not _is_number(score):
        problems.append(f"{where}: score must be a number, got {score!r}")
        ok = False
    if (
        not isinstance(bbox, list)
        or len(bbox) != 4
        or not all(_is_number(v) for v in bbox)
    ):
        problems.append(f"{where}: bbox must be a list of 4 numbers, got {bbox!r}")
        ok = False
    if not ok:
        return None
    box = BoundingBox(float(bbox[0]), float(bbox[1]), float(bbox[2]), float(bbox[3]))
    return Detection(box, class_ids[name], float(score))


def _detection_doc(det: Detection, class_table: tuple[str, ...]) -> dict:
    return {
        "class": class_table[det.class_id],
        "score": det.score,
        "bbox": [det.box.x, det.box.y, det.box.w, det.box.h],
    }


def _class_ids(class_table, where: str, problems: list[str]) -> dict[str, int]:
    ids: dict[str, int] = {}
    if not isinstance(class_table, list) or not all(isinstance(c, str) for c in class_table):
        problems.append(f"{where}: class_table must be a list of strings")
        return ids
    for i, name in enumerate(class_table):
        if name in ids:
            problems.append(f"{where}: class_table has duplicate name {name!r}")
        else:
            ids[name] = i
    return ids


# --- detection streams -------------------------------------------------------

def parse_stream(data: bytes | str) -> DetectionStream:
    """Parse a stream document; the result always passes validate_stream.

    Frames are returned sorted by frame_index; a duplicated frame_index is
    an error rather than last-wins, since silently merged frames would
    corrupt downstream rankings.
    """
    doc = _load_json(data)
    _check_version(doc, "stream")
    problems: list[str] = []
    source_id = doc.get("source_id")
    if not isinstance(source_id, str):
        problems.append(f"source_id must be a string, got {source_id!r}")
        source_id = ""
    class_ids = _class_ids(doc.get("class_table"), "class_table", problems)
    raw_frames = doc.get("frames")
    frames: list[FrameDetections] = []
    if not isinstance(raw_frames, list):
        problems.append(f"frames must be a list, got {type(raw_frames).__name__}")
        raw_frames = []
    seen: dict[int, int] = {}
    for pos, raw in enumerate(raw_frames):
        where = f"frames[{pos}]"
        if not isinstance(raw, dict):
            problems.append(f"{where}: frame must be an object")
            continue
        frame_index = raw.get("frame_index")
        if not isinstance(frame_index, int) or isinstance(frame_index, bool):
            problems.append(f"{where}: frame_index must be an integer, got {frame_index!r}")
            continue
        if frame_index in seen:
            problems.append(
                f"{where}: duplicate frame_index {frame_index} (first at frames[{seen[frame_index]}])"
            )
            continue
        seen[frame_index] = pos
        image_ref = raw.get("image_ref")
        if not isinstance(image_ref, str):
            problems.append(f"{where}: image_ref must be a string, got {image_ref!r}")
            image_ref = ""
        raw_dets = raw.get("detections")
        if not isinstance(raw_dets, list):
            problems.append(f"{where}: detections must be a list")
            raw_dets = []
        dets = []
        for j, raw_det in enumerate(raw_dets):
            det = _parse_detection(raw_det, f"{where}.detections[{j}]", class_ids, problems)
            if det is not None:
                dets.append(det)
        frames.append(FrameDetections(frame_index, image_ref, tuple(dets)))
    if problems:
        raise ValidationError(problems)
    frames.sort(key=lambda f: f.frame_index)
    stream = DetectionStream(source_id, tuple(class_ids), tuple(frames))
    violations = validate_stream(stream)
    if violations:
        raise ValidationError(violations)
    return stream


def write_stream(stream: DetectionStream) -> bytes:
    """Serialize a valid stream; parse_stream inverts this exactly."""
    problems = validate_stream(stream)
    seen = set()
    for name in stream.class_table:
        if name in seen:
            problems.append(f"class_table: duplicate name {name!r} cannot be serialized")
        seen.add(name)
    if problems:
        raise ValidationError(problems)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "source_id": stream.source_id,
        "class_table": list(stream.class_table),
        "frames": [
            {
                "frame_index": frame.frame_index,
                "image_ref": frame.image_ref,
                "detections": [
                    _detection_doc(det, stream.class_table) for det in frame.detections
                ],
            }
            for frame in stream.frames
        ],
    }
    return _dump(doc, compact=True)


# --- curated-dataset manifests -----------------------------------------------

_PROVENANCE_FIELDS = (
    "teacher",
    "strategy",
    "n",
    "teacher_score_threshold",
    "student_score_threshold",
    "iou_threshold",
    "epsilon",
)


def _dataset_problems(dataset: CuratedDataset) -> list[str]:
    problems: list[str] = []
    prov = dataset.provenance
    if prov.strategy not in STRATEGIES:
        problems.append(f"provenance: strategy {prov.strategy!r} not one of {STRATEGIES}")
    if not isinstance(prov.n, int) or isinstance(prov.n, bool) or prov.n < 0:
        problems.append(f"provenance: n must be an integer >= 0, got {prov.n!r}")
    for name in ("teacher_score_threshold", "student_score_threshold"):
        value = getattr(prov, name)
        if not _is_number(value) or not 0.0 <= value <= 1.0:
            problems.append(f"provenance: {name} must be in [0, 1], got {value!r}")
    if not _is_number(prov.iou_threshold) or not 0.0 < prov.iou_threshold <= 1.0:
        problems.append(f"provenance: iou_threshold must be in (0, 1], got {prov.iou_threshold!r}")
    if not _is_number(prov.epsilon) or not prov.epsilon > 0:
        problems.append(f"provenance: epsilon must be > 0, got {prov.epsilon!r}")
    if isinstance(prov.n, int) and not isinstance(prov.n, bool) and len(dataset.entries) > prov.n >= 0:
        problems.append(
            f"entries: {len(dataset.entries)} entries exceed provenance n = {prov.n}"
        )
    n_classes = len(dataset.class_table)
    last = None
    for pos, entry in enumerate(dataset.entries):
        where = f"entries[{pos}] (frame {entry.frame_index})"
        if last is not None and entry.frame_index <= last:
            problems.append(f"{where}: frame_index must be strictly ascending")
        last = entry.frame_index
        for j, det in enumerate(entry.pseudo_labels):
            tag = f"{where}: labels[{j}]"
            if not isinstance(det.class_id, int) or not 0 <= det.class_id < n_classes:
                problems.append(f"{tag}: class_id {det.class_id!r} not in class_table")
            if not _is_number(det.score) or not 0.0 <= det.score <= 1.0:
                problems.append(f"{tag}: score {det.score!r} must be in [0, 1]")
            elif _is_number(prov.teacher_score_threshold) and det.score < prov.teacher_score_threshold:
                problems.append(
                    f"{tag}: score {det.score!r} below teacher_score_threshold "
                    f"{prov.teacher_score_threshold!r}"
                )
            for field_name in ("x", "y", "w", "h"):
                value = getattr(det.box, field_name)
                if not _is_number(value) or not math.isfinite(value):
                    problems.append(f"{tag}: bbox {field_name} {value!r} must be finite")
            if _is_number(det.box.w) and det.box.w <= 0:
                problems.append(f"{tag}: bbox w {det.box.w!r} violates w > 0")
            if _is_number(det.box.h) and det.box.h <= 0:
                problems.append(f"{tag}: bbox h {det.box.h!r} violates h > 0")
    return problems


def write_manifest(dataset: CuratedDataset) -> bytes:
    """Serialize a curated dataset; parse_manifest inverts this exactly."""
    problems = _dataset_problems(dataset)
    if problems:
        raise ValidationError(problems)
    prov = dataset.provenance
    doc = {
        "schema_version": SCHEMA_VERSION,
        "provenance": {name: getattr(prov, name) for name in _PROVENANCE_FIELDS},
        "class_table": list(dataset.class_table),
        "entries": [
            {
                "frame_index": entry.frame_index,
                "image_ref": entry.image_ref,
                "l_train": entry.l_train,
                "labels": [
                    _detection_doc(det, dataset.class_table) for det in entry.pseudo_labels
                ],
            }
            for entry in dataset.entries
        ],
    }
    return _dump(doc, compact=False)


def parse_manifest(data: bytes | str) -> CuratedDataset:
    """Parse a curated-dataset manifest; the provenance block is mandatory."""
    doc = _load_json(data)
    _check_version(doc, "manifest")
    problems: list[str] = []
    raw_prov = doc.get("provenance")
    if not isinstance(raw_prov, dict):
        raise ValidationError(["provenance block is mandatory and must be an object"])
    missing = [name for name in _PROVENANCE_FIELDS if name not in raw_prov]
    if missing:
        raise ValidationError([f"provenance: missing field {name!r}" for name in missing])
    if not isinstance(raw_prov.get("teacher"), str):
        problems.append(f"provenance: teacher must be a string, got {raw_prov.get('teacher')!r}")
    provenance = CurationProvenance(
        teacher=str(raw_prov.get("teacher")),
        strategy=raw_prov.get("strategy"),
        n=raw_prov.get("n"),
        teacher_score_threshold=raw_prov.get("teacher_score_threshold"),
        student_score_threshold=raw_prov.get("student_score_threshold"),
        iou_threshold=raw_prov.get("iou_threshold"),
        epsilon=raw_prov.get("epsilon"),
    )
    class_ids = _class_ids(doc.get("class_table"), "class_table", problems)
    raw_entries = doc.get("entries")
    if not isinstance(raw_entries, list):
        problems.append(f"entries must be a list, got {type(raw_entries).__name__}")
        raw_entries = []
    entries = []
    for pos, raw in enumerate(raw_entries):
        where = f"entries[{pos}]"
        if not isinstance(raw, dict):
            problems.append(f"{where}: entry must be an object")
            continue
        frame_index = raw.get("frame_index")
        if not isinstance(frame_index, int) or isinstance(frame_index, bool) or frame_index < 0:
            problems.append(f"{where}: frame_index must be an integer >= 0, got {frame_index!r}")
            continue
        image_ref = raw.get("image_ref")
        if not isinstance(image_ref, str):
            problems.append(f"{where}: image_ref must be a string")
            image_ref = ""
        score = raw.get("l_train")
        if not _is_number(score) or score < 0:
            problems.append(f"{where}: l_train must be a number >= 0, got {score!r}")
            score = 0.0
        raw_labels = raw.get("labels")
        if not isinstance(raw_labels, list):
            problems.append(f"{where}: labels must be a list")
            raw_labels = []
        labels = []
        for j, raw_det in enumerate(raw_labels):
            det = _parse_detection(raw_det, f"{where}.labels[{j}]", class_ids, problems)
            if det is not None:
                labels.append(det)
        entries.append(DatasetEntry(frame_index, image_ref, tuple(labels), float(score)))
    if problems:
        raise ValidationError(problems)
    dataset = CuratedDataset(provenance, tuple(class_ids), tuple(entries))
    problems = _dataset_problems(dataset)
    if problems:
        raise ValidationError(problems)
    return dataset


# --- score files -------------------------------------------------------------

def write_scores(scores: ScoreSet) -> bytes:
    """Serialize a scored stream pair as produced by the score subcommand."""
    match = scores.match
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "scores",
        "teacher": scores.teacher,
        "student": scores.student,
        "config": {
            "iou_threshold": match.iou_threshold,
            "teacher_score_threshold": match.teacher_score_threshold,
            "student_score_threshold": match.student_score_threshold,
            "class_aware": match.class_aware,
            "epsilon": scores.epsilon,
        },
        "frames": [
            {
                "frame_index": s.frame_index,
                "tp": s.counts.tp,
                "fp": s.counts.fp,
                "fn": s.counts.fn,
                "l_train": s.l_train,
            }
            for s in scores.frames
        ],
    }
    return _dump(doc, compact=False)


def parse_scores(data: bytes | str) -> ScoreSet:
    """Parse a score file, re-deriving and checking each stored l_train."""
    doc = _load_json(data)
    _check_version(doc, "scores")
    if doc.get("kind") != "scores":
        raise ValidationError(f"expected document kind 'scores', got {doc.get('kind')!r}")
    problems: list[str] = []
    config = doc.get("config")
    if not isinstance(config, dict):
        raise ValidationError(["config block is mandatory and must be an object"])
    try:
        match = MatchConfig(
            iou_threshold=config.get("iou_threshold", 0.5),
            teacher_score_threshold=config.get("teacher_score_threshold", 0.7),
            student_score_threshold=config.get("student_score_threshold", 0.5),
            class_aware=bool(config.get("class_aware", True)),
        )
    except UsageError as exc:
        raise ValidationError(f"config invalid: {exc}") from exc
    epsilon = config.get("epsilon", 0.5)
    if not _is_number(epsilon) or not epsilon > 0:
        raise ValidationError([f"config: epsilon must be > 0, got {epsilon!r}"])
    frames = []
    raw_frames = doc.get("frames")
    if not isinstance(raw_frames, list):
        problems.append("frames must be a list")
        raw_frames = []
    last = None
    for pos, raw in enumerate(raw_frames):
        where = f"frames[{pos}]"
        if not isinstance(raw, dict):
            problems.append(f"{where}: must be an object")
            continue
        fields = {}
        ok = True
        for name in ("frame_index", "tp", "fp", "fn"):
            value = raw.get(name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                problems.append(f"{where}: {name} must be an integer >= 0, got {value!r}")
                ok = False
            fields[name] = value
        stored = raw.get("l_train")
        if not _is_number(stored):
            problems.append(f"{where}: l_train must be a number, got {stored!r}")
            ok = False
        if not ok:
            continue
        if last is not None and fields["frame_index"] <= last:
            problems.append(f"{where}: frame_index must be strictly ascending")
        last = fields["frame_index"]
        counts = ConfusionCounts(fields["tp"], fields["fp"], fields["fn"])
        expected = l_train(counts, float(epsilon))
        if not math.isclose(expected, stored, rel_tol=1e-9, abs_tol=1e-9):
            problems.append(
                f"{where}: stored l_train {stored!r} does not match counts "
                f"(recomputed {expected!r})"
            )
            continue
        frames.append(ScoredFrame(fields["frame_index"], counts, float(stored)))
    if problems:
        raise ValidationError(problems)
    teacher = doc.get("teacher")
    student = doc.get("student")
    if not isinstance(teacher, str) or not isinstance(student, str):
        raise ValidationError(["teacher and student source ids must be strings"])
    return ScoreSet(teacher, student, match, float(epsilon), tuple(frames))


def curation_config_from_scores(scores: ScoreSet, strategy: str, n: int) -> CurationConfig:
    """Rebuild the curation config recorded in a score file."""
    return CurationConfig(match=scores.match, epsilon=scores.epsilon, n=n, strategy=strategy)
