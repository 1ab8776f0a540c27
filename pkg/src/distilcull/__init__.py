"""Teacher-student detection consistency scoring and dataset culling.

The library matches a compact student detector's output against a teacher's
pseudo-labels frame by frame, scores how inconsistent each frame is,
curates the most informative frames into a training manifest, and measures
progress as relative mAP against the teacher. A seeded simulator makes the
whole loop runnable and testable without any real model; subprocess
adapters plug in real detectors and trainers through a file protocol.
"""

from .backend import backend_name
from .curation import (
    CurationConfig,
    ScoredFrame,
    ScoreSet,
    compile_dataset,
    l_train,
    score_stream,
    select_dds,
    select_simple,
)
from .errors import (
    AdapterError,
    AdapterTimeout,
    DistilcullError,
    ParseError,
    PipelineStageError,
    UnsupportedVersionError,
    UsageError,
    ValidationError,
)
from .evaluation import EvalReport, PRPoint, average_precision, pr_curve, relative_map
from .ingest import (
    SCHEMA_VERSION,
    parse_manifest,
    parse_scores,
    parse_stream,
    write_manifest,
    write_scores,
    write_stream,
)
from .matching import MatchConfig, MatchResult, confusion_counts, iou, match_frame
from .pipeline import (
    AdapterSource,
    PipelineConfig,
    PipelineReport,
    SimulationSource,
    parse_pipeline_config,
    run_pipeline,
    sweep,
)
from .simulation import (
    DetectorProfile,
    DomainParams,
    ScoreModel,
    SyntheticDomain,
    TrainingParams,
    generate_domain,
    pretrained_student_profile,
    simulate_detector,
    simulate_training,
    teacher_profile,
)
from .adapters import AdapterSpec, TrainReport, run_detect, run_train
from .types import (
    BoundingBox,
    ConfusionCounts,
    CuratedDataset,
    CurationProvenance,
    DatasetEntry,
    Detection,
    DetectionStream,
    FrameDetections,
    merge_class_tables,
    validate_stream,
)

__version__ = "0.1.0"

__all__ = [
    "AdapterError",
    "AdapterSource",
    "AdapterSpec",
    "AdapterTimeout",
    "BoundingBox",
    "ConfusionCounts",
    "CuratedDataset",
    "CurationConfig",
    "CurationProvenance",
    "DatasetEntry",
    "Detection",
    "DetectionStream",
    "DetectorProfile",
    "DistilcullError",
    "DomainParams",
    "EvalReport",
    "FrameDetections",
    "MatchConfig",
    "MatchResult",
    "ParseError",
    "PipelineConfig",
    "PipelineReport",
    "PipelineStageError",
    "PRPoint",
    "SCHEMA_VERSION",
    "ScoredFrame",
    "ScoreModel",
    "ScoreSet",
    "SimulationSource",
    "SyntheticDomain",
    "TrainingParams",
    "TrainReport",
    "UnsupportedVersionError",
    "UsageError",
    "ValidationError",
    "average_precision",
    "backend_name",
    "compile_dataset",
    "confusion_counts",
    "generate_domain",
    "iou",
    "l_train",
    "match_frame",
    "merge_class_tables",
    "parse_manifest",
    "parse_pipeline_config",
    "parse_scores",
    "parse_stream",
    "pr_curve",
    "pretrained_student_profile",
    "relative_map",
    "run_detect",
    "run_pipeline",
    "run_train",
    "score_stream",
    "select_dds",
    "select_simple",
    "simulate_detector",
    "simulate_training",
    "sweep",
    "teacher_profile",
    "validate_stream",
    "write_manifest",
    "write_scores",
    "write_stream",
]
