"""End-to-end orchestration: label, score, select, compile, train, evaluate.

A run works over either a synthetic domain (simulation source) or external
executables (adapter source). Frames are split first-half/second-half by
position: the training half feeds scoring and curation, the held-out half
is what both evaluation passes see. Every intermediate is persisted with a
content hash so a run can be audited file by file, and the manifest the
trainer consumes is re-read from the persisted bytes, never a diverging
in-memory copy.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import tempfile
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ingest
from .adapters import AdapterSpec, KIND_DETECT, KIND_TRAIN, run_detect, run_train
from .curation import (
    CurationConfig,
    ScoredFrame,
    ScoreSet,
    compile_dataset,
    score_stream,
    select_frames,
)
from .errors import DistilcullError, PipelineStageError, UsageError
from .evaluation import EvalReport, relative_map
from .matching import MatchConfig
from .simulation import (
    DetectorProfile,
    DomainParams,
    SyntheticDomain,
    TrainingParams,
    generate_domain,
    pretrained_student_profile,
    profile_from_dict,
    profile_to_dict,
    simulate_detector,
    simulate_training,
    teacher_profile,
)
from .types import DetectionStream

_TEACHER_SEED_SALT = 21
_STUDENT_SEED_SALT = 22


@dataclass(frozen=True, slots=True)
class SimulationSource:
    """Synthetic teacher/student pair over a generated domain."""

    seed: int
    domain: DomainParams = DomainParams()
    teacher: DetectorProfile = field(default_factory=teacher_profile)
    student: DetectorProfile = field(default_factory=pretrained_student_profile)
    training: TrainingParams = TrainingParams()


@dataclass(frozen=True, slots=True)
class AdapterSource:
    """External detectors and trainer driven through the file protocol."""

    teacher: AdapterSpec
    student_detect: AdapterSpec
    student_train: AdapterSpec
    image_refs: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "image_refs", tuple(self.image_refs))
        if self.teacher.kind != KIND_DETECT or self.student_detect.kind != KIND_DETECT:
            raise UsageError("teacher and student_detect adapters must have kind 'detect'")
        if self.student_train.kind != KIND_TRAIN:
            raise UsageError("student_train adapter must have kind 'train'")
        if len(self.image_refs) < 2:
            raise UsageError("adapter source needs at least 2 images to split train/test")


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    source: SimulationSource | AdapterSource
    curation: CurationConfig
    eval: MatchConfig
    output_dir: str


@dataclass(frozen=True, slots=True)
class PipelineReport:
    """One pipeline run, mirroring one row of a budget-versus-accuracy table."""

    strategy: str
    n_used: int
    frames_total: int
    frames_culled_fraction: float
    rmap_before: float
    rmap_after: float
    per_class_before: dict[str, float]
    per_class_after: dict[str, float]
    artifacts: dict[str, dict]
    config: dict
    durations: dict[str, float]

    def to_json_dict(self) -> dict:
        return {
            "schema_version": ingest.SCHEMA_VERSION,
            "kind": "pipeline_report",
            "strategy": self.strategy,
            "n_used": self.n_used,
            "frames_total": self.frames_total,
            "frames_culled_fraction": self.frames_culled_fraction,
            "rmap_before": self.rmap_before,
            "rmap_after": self.rmap_after,
            "per_class_before": dict(self.per_class_before),
            "per_class_after": dict(self.per_class_after),
            "artifacts": self.artifacts,
            "config": self.config,
            "durations": self.durations,
        }


# --- config (de)serialization --------------------------------------------------

def _build(cls, doc: dict, where: str, **overrides):
    if not isinstance(doc, dict):
        raise UsageError(f"{where}: must be an object")
    allowed = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise UsageError(f"{where}: unknown keys {unknown}; allowed: {sorted(allowed)}")
    try:
        return cls(**{**doc, **overrides})
    except TypeError as exc:
        raise UsageError(f"{where}: {exc}") from exc


def parse_pipeline_config(
    data: bytes | str | dict, base_dir: str | Path | None = None
) -> PipelineConfig:
    """Load a pipeline config document; all problems are usage errors."""
    if isinstance(data, (bytes, str)):
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as exc:
            raise UsageError(
                f"pipeline config is not valid JSON: {exc.msg} at position {exc.pos}"
            ) from exc
    else:
        doc = data
    if not isinstance(doc, dict):
        raise UsageError("pipeline config must be a JSON object")
    version = doc.get("schema_version", ingest.SCHEMA_VERSION)
    if version != ingest.SCHEMA_VERSION:
        raise UsageError(f"unsupported pipeline config schema_version {version!r}")
    unknown = sorted(set(doc) - {"schema_version", "source", "curation", "eval", "output_dir"})
    if unknown:
        raise UsageError(f"pipeline config: unknown keys {unknown}")

    raw_source = doc.get("source")
    if not isinstance(raw_source, dict) or "kind" not in raw_source:
        raise UsageError("pipeline config needs a source object with a 'kind'")
    kind = raw_source["kind"]
    body = {k: v for k, v in raw_source.items() if k != "kind"}
    if kind == "simulation":
        if "seed" not in body:
            raise UsageError("simulation source needs a seed")
        source = SimulationSource(
            seed=body.pop("seed"),
            domain=_build(DomainParams, body.pop("domain", {}), "source.domain"),
            teacher=_profile(body.pop("teacher_profile", None), "source.teacher_profile", teacher_profile),
            student=_profile(body.pop("student_profile", None), "source.student_profile", pretrained_student_profile),
            training=_build(TrainingParams, body.pop("training", {}), "source.training"),
        )
        if body:
            raise UsageError(f"simulation source: unknown keys {sorted(body)}")
    elif kind == "adapters":
        refs = _image_refs(body, base_dir)
        source = AdapterSource(
            teacher=_adapter(body.pop("teacher", None), "source.teacher", KIND_DETECT),
            student_detect=_adapter(body.pop("student_detect", None), "source.student_detect", KIND_DETECT),
            student_train=_adapter(body.pop("student_train", None), "source.student_train", KIND_TRAIN),
            image_refs=refs,
        )
        if body:
            raise UsageError(f"adapter source: unknown keys {sorted(body)}")
    else:
        raise UsageError(f"source.kind must be 'simulation' or 'adapters', got {kind!r}")

    raw_curation = doc.get("curation", {})
    if not isinstance(raw_curation, dict):
        raise UsageError("curation block must be an object")
    raw_curation = dict(raw_curation)
    match = _build(MatchConfig, raw_curation.pop("match", {}), "curation.match")
    curation = _build(CurationConfig, raw_curation, "curation", match=match)

    eval_cfg = _build(MatchConfig, doc.get("eval", {}), "eval")

    output_dir = doc.get("output_dir")
    if not isinstance(output_dir, str) or not output_dir:
        raise UsageError("pipeline config needs a non-empty output_dir string")
    return PipelineConfig(source=source, curation=curation, eval=eval_cfg, output_dir=output_dir)


def _profile(doc, where: str, default) -> DetectorProfile:
    if doc is None:
        return default()
    if not isinstance(doc, dict):
        raise UsageError(f"{where}: must be an object")
    try:
        return profile_from_dict(doc)
    except UsageError as exc:
        raise UsageError(f"{where}: {exc}") from exc


def _adapter(doc, where: str, kind: str) -> AdapterSpec:
    if not isinstance(doc, dict):
        raise UsageError(f"{where}: adapter spec object is required")
    doc = dict(doc)
    doc.pop("kind", None)
    if isinstance(doc.get("command"), list):
        doc["command"] = tuple(doc["command"])
    return _build(AdapterSpec, doc, where, kind=kind)


def _image_refs(body: dict, base_dir) -> tuple[str, ...]:
    if "image_refs" in body:
        refs = body.pop("image_refs")
        if not isinstance(refs, list) or not all(isinstance(r, str) for r in refs):
            raise UsageError("source.image_refs must be a list of strings")
        body.pop("image_list", None)
        return tuple(refs)
    path = body.pop("image_list", None)
    if not isinstance(path, str):
        raise UsageError("adapter source needs image_refs or an image_list path")
    full = Path(base_dir) / path if base_dir is not None else Path(path)
    try:
        lines = full.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read image_list {full}: {exc}") from exc
    return tuple(line for line in lines if line.strip())


def config_to_dict(cfg: PipelineConfig) -> dict:
    """Config echo embedded in reports; parse_pipeline_config inverts it."""
    if isinstance(cfg.source, SimulationSource):
        src = cfg.source
        source = {
            "kind": "simulation",
            "seed": src.seed,
            "domain": dataclasses.asdict(src.domain),
            "teacher_profile": profile_to_dict(src.teacher),
            "student_profile": profile_to_dict(src.student),
            "training": dataclasses.asdict(src.training),
        }
    else:
        source = {
            "kind": "adapters",
            "teacher": _adapter_dict(cfg.source.teacher),
            "student_detect": _adapter_dict(cfg.source.student_detect),
            "student_train": _adapter_dict(cfg.source.student_train),
            "image_refs": list(cfg.source.image_refs),
        }
    return {
        "schema_version": ingest.SCHEMA_VERSION,
        "source": source,
        "curation": {
            "strategy": cfg.curation.strategy,
            "n": cfg.curation.n,
            "epsilon": cfg.curation.epsilon,
            "match": dataclasses.asdict(cfg.curation.match),
        },
        "eval": dataclasses.asdict(cfg.eval),
        "output_dir": cfg.output_dir,
    }


def _adapter_dict(spec: AdapterSpec) -> dict:
    return {
        "command": list(spec.command),
        "working_dir": spec.working_dir,
        "timeout": spec.timeout,
    }


# --- stage machinery ------------------------------------------------------------

@contextmanager
def _stage(name: str):
    try:
        yield
    except DistilcullError as exc:
        raise PipelineStageError(name, exc) from exc


def _derive_seed(seed: int, salt: int) -> int:
    return int(np.random.SeedSequence([seed, salt]).generate_state(1, np.uint64)[0])


def _slice_stream(stream: DetectionStream, start: int, stop: int | None = None) -> DetectionStream:
    return dataclasses.replace(stream, frames=stream.frames[start:stop])


def _shift_frames(stream: DetectionStream, offset: int) -> DetectionStream:
    frames = tuple(
        dataclasses.replace(f, frame_index=f.frame_index + offset) for f in stream.frames
    )
    return dataclasses.replace(stream, frames=frames)


class _Workspace:
    """Artifact persistence for one run; records relative path and hash.

    With persist=False nothing is serialized or written and reports carry
    an empty artifacts map; the computation itself is unchanged.
    """

    def __init__(self, root: Path, persist: bool):
        self.root = root
        self.persist = persist
        if persist:
            root.mkdir(parents=True, exist_ok=True)

    def save(self, artifacts: dict, name: str, relpath: str, make_data) -> Path | None:
        if not self.persist:
            return None
        data = make_data() if callable(make_data) else make_data
        artifacts[name] = {"path": relpath, "sha256": hashlib.sha256(data).hexdigest()}
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        return path

    def subdir(self, relpath: str) -> Path | None:
        return self.root / relpath if self.persist else None


@dataclass
class _Prepared:
    """Everything the cell loop shares: streams, scores, and the before-eval."""

    half: int
    teacher_train: DetectionStream
    teacher_test: DetectionStream
    student_test: DetectionStream
    scored: list[ScoredFrame]
    report_before: EvalReport
    scoring_s: float
    artifacts: dict[str, dict]
    domain: SyntheticDomain | None        # simulation only
    train_domain: SyntheticDomain | None


def _prepare(cfg: PipelineConfig, ws: _Workspace) -> _Prepared:
    source = cfg.source
    artifacts: dict[str, dict] = {}
    domain = None
    train_domain = None
    if isinstance(source, SimulationSource):
        with _stage("generate_domain"):
            domain = generate_domain(source.seed, source.domain)
            half = domain.num_frames // 2
            train_domain = domain.subset(0, half)
        with _stage("teacher_predict"):
            teacher = simulate_detector(
                domain, source.teacher, _derive_seed(source.seed, _TEACHER_SEED_SALT),
                source_id="teacher-sim",
            )
        with _stage("student_predict"):
            student = simulate_detector(
                domain, source.student, _derive_seed(source.seed, _STUDENT_SEED_SALT),
                source_id="student-sim",
            )
    else:
        refs = list(source.image_refs)
        half = len(refs) // 2
        with _stage("teacher_predict"):
            teacher = run_detect(
                source.teacher, refs,
                exchange_dir=ws.subdir("exchange/teacher"),
                log_path=ws.subdir("logs/teacher_detect.log"),
            )
        with _stage("student_predict"):
            student = run_detect(
                source.student_detect, refs,
                exchange_dir=ws.subdir("exchange/student_before"),
                log_path=ws.subdir("logs/student_detect_before.log"),
            )
    ws.save(
        artifacts, "teacher_stream", "teacher_stream.json",
        lambda: ingest.write_stream(teacher),
    )
    ws.save(
        artifacts, "student_before_stream", "student_before_stream.json",
        lambda: ingest.write_stream(student),
    )

    teacher_train = _slice_stream(teacher, 0, half)
    teacher_test = _slice_stream(teacher, half)
    student_train = _slice_stream(student, 0, half)
    student_test = _slice_stream(student, half)

    with _stage("score"):
        start = time.perf_counter()
        scored = score_stream(teacher_train, student_train, cfg.curation)
        scoring_s = time.perf_counter() - start
    ws.save(
        artifacts, "scores", "scores.json",
        lambda: ingest.write_scores(
            ScoreSet(
                teacher=teacher.source_id,
                student=student.source_id,
                match=cfg.curation.match,
                epsilon=cfg.curation.epsilon,
                frames=tuple(scored),
            )
        ),
    )
    with _stage("evaluate_before"):
        report_before = relative_map(student_test, teacher_test, cfg.eval)
    return _Prepared(
        half=half,
        teacher_train=teacher_train,
        teacher_test=teacher_test,
        student_test=student_test,
        scored=scored,
        report_before=report_before,
        scoring_s=scoring_s,
        artifacts=artifacts,
        domain=domain,
        train_domain=train_domain,
    )


def _run_cell(
    cfg: PipelineConfig,
    prepared: _Prepared,
    curation_cfg: CurationConfig,
    ws: _Workspace,
    prefix: str,
) -> PipelineReport:
    total_start = time.perf_counter()
    source = cfg.source
    artifacts = dict(prepared.artifacts)
    tag = prefix.replace("/", "_")
    with _stage("select"):
        selection = select_frames(prepared.scored, curation_cfg)
    with _stage("compile_dataset"):
        dataset = compile_dataset(selection, prepared.teacher_train, prepared.scored, curation_cfg)
        need_bytes = ws.persist or not isinstance(source, SimulationSource)
        manifest_bytes = ingest.write_manifest(dataset) if need_bytes else None
    manifest_path = ws.save(artifacts, "manifest", f"{prefix}manifest.json", manifest_bytes)

    # stage isolation: when persisting, training consumes the bytes written
    # to disk, never the in-memory dataset
    with _stage("train"):
        train_start = time.perf_counter()
        if isinstance(source, SimulationSource):
            train_set = (
                ingest.parse_manifest(manifest_path.read_bytes()) if manifest_path else dataset
            )
            trained = simulate_training(
                source.student, train_set, prepared.train_domain, source.training
            )
        else:
            with _manifest_file(manifest_path, manifest_bytes) as path:
                run_train(
                    source.student_train, path,
                    exchange_dir=ws.subdir(f"exchange/{tag}train"),
                    log_path=ws.subdir(f"logs/{tag}train.log"),
                )
        train_s = time.perf_counter() - train_start

    with _stage("student_predict_after"):
        if isinstance(source, SimulationSource):
            test_domain = prepared.domain.subset(prepared.half)
            after_test = simulate_detector(
                test_domain, trained, _derive_seed(source.seed, _STUDENT_SEED_SALT),
                source_id="student-sim",
            )
        else:
            refs_test = list(source.image_refs)[prepared.half:]
            after_local = run_detect(
                source.student_detect, refs_test,
                exchange_dir=ws.subdir(f"exchange/{tag}student_after"),
                log_path=ws.subdir(f"logs/{tag}student_detect_after.log"),
            )
            after_test = _shift_frames(after_local, prepared.half)
    ws.save(
        artifacts, "student_after_stream", f"{prefix}student_after_stream.json",
        lambda: ingest.write_stream(after_test),
    )

    with _stage("evaluate_after"):
        report_after = relative_map(after_test, prepared.teacher_test, cfg.eval)

    frames_total = len(prepared.teacher_train.frames)
    n_used = len(dataset.entries)
    report = PipelineReport(
        strategy=curation_cfg.strategy,
        n_used=n_used,
        frames_total=frames_total,
        frames_culled_fraction=1.0 - n_used / frames_total,
        rmap_before=prepared.report_before.rmap,
        rmap_after=report_after.rmap,
        per_class_before=dict(prepared.report_before.per_class_ap),
        per_class_after=dict(report_after.per_class_ap),
        artifacts=dict(artifacts),
        config=config_to_dict(dataclasses.replace(cfg, curation=curation_cfg)),
        durations={
            "scoring_s": prepared.scoring_s,
            "train_s": train_s,
            "total_s": time.perf_counter() - total_start,
        },
    )
    ws.save(artifacts, "report", f"{prefix}report.json", lambda: _dump_report(report))
    return report


@contextmanager
def _manifest_file(path: Path | None, data: bytes):
    """A real manifest file for the trainer, even when not persisting."""
    if path is not None:
        yield path
        return
    with tempfile.TemporaryDirectory(prefix="distilcull-manifest-") as tmp:
        scratch = Path(tmp) / "manifest.json"
        scratch.write_bytes(data)
        yield scratch


def _dump_report(report: PipelineReport) -> bytes:
    return (json.dumps(report.to_json_dict(), indent=2, allow_nan=False) + "\n").encode("utf-8")


def run_pipeline(cfg: PipelineConfig, persist: bool = True) -> PipelineReport:
    """Execute the whole loop once and return (and persist) its report.

    Any stage error aborts with the stage name and the underlying error;
    artifacts persisted before the failure are kept for debugging.
    """
    ws = _Workspace(Path(cfg.output_dir), persist)
    prepared = _prepare(cfg, ws)
    return _run_cell(cfg, prepared, cfg.curation, ws, prefix="")


def sweep(
    cfg: PipelineConfig,
    n_values: Sequence[int],
    strategies: Sequence[str],
    persist: bool = True,
) -> list[PipelineReport]:
    """Run every (n, strategy) cell over one shared prepared snapshot.

    All cells see the same teacher/student streams, the same scores, and
    the same seeds, so their reports are directly comparable rows. Returns
    one report per cell, strategies outermost, and persists the whole grid
    as sweep.json.
    """
    n_values = [int(n) for n in n_values]
    strategies = list(strategies)
    if not n_values or not strategies:
        raise UsageError("sweep needs at least one n value and one strategy")
    ws = _Workspace(Path(cfg.output_dir), persist)
    prepared = _prepare(cfg, ws)
    reports = []
    for strategy in strategies:
        for n in n_values:
            cell_cfg = dataclasses.replace(cfg.curation, n=n, strategy=strategy)
            reports.append(
                _run_cell(cfg, prepared, cell_cfg, ws, prefix=f"cells/{strategy}_{n}/")
            )
    if persist:
        table = {
            "schema_version": ingest.SCHEMA_VERSION,
            "kind": "sweep",
            "rows": [r.to_json_dict() for r in reports],
        }
        (ws.root / "sweep.json").write_bytes(
            (json.dumps(table, indent=2, allow_nan=False) + "\n").encode("utf-8")
        )
    return reports
