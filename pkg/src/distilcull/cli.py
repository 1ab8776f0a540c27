"""Command-line entry points for scoring, curation, evaluation, and runs.

Exit codes: 0 success, 2 usage or configuration error, 3 adapter failure,
4 validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, ingest
from .curation import (
    CurationConfig,
    ScoreSet,
    STRATEGIES,
    compile_dataset,
    score_stream,
    select_frames,
)
from .errors import DistilcullError, UsageError
from .evaluation import relative_map
from .matching import MatchConfig
from .pipeline import parse_pipeline_config, run_pipeline, sweep
from .simulation import (
    DomainParams,
    generate_domain,
    parse_profile,
    pretrained_student_profile,
    simulate_detector,
)


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _write_bytes(path: str, data: bytes) -> None:
    try:
        target = Path(path)
        if target.parent != Path(""):
            target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def _match_config(args) -> MatchConfig:
    return MatchConfig(
        iou_threshold=args.iou,
        teacher_score_threshold=args.teacher_score_threshold,
        student_score_threshold=args.student_score_threshold,
        class_aware=not args.class_agnostic,
    )


def _cmd_score(args) -> int:
    teacher = ingest.parse_stream(_read_bytes(args.teacher))
    student = ingest.parse_stream(_read_bytes(args.student))
    cfg = CurationConfig(match=_match_config(args), epsilon=args.epsilon)
    scored = score_stream(teacher, student, cfg)
    doc = ScoreSet(
        teacher=teacher.source_id,
        student=student.source_id,
        match=cfg.match,
        epsilon=cfg.epsilon,
        frames=tuple(scored),
    )
    _write_bytes(args.out, ingest.write_scores(doc))
    print(f"scored {len(scored)} frames -> {args.out}")
    return 0


def _cmd_curate(args) -> int:
    scores = ingest.parse_scores(_read_bytes(args.scores))
    teacher = ingest.parse_stream(_read_bytes(args.teacher))
    cfg = ingest.curation_config_from_scores(scores, strategy=args.strategy, n=args.n)
    selection = select_frames(list(scores.frames), cfg)
    dataset = compile_dataset(selection, teacher, list(scores.frames), cfg)
    _write_bytes(args.out, ingest.write_manifest(dataset))
    print(f"curated {len(dataset.entries)} of {len(scores.frames)} frames "
          f"({args.strategy}) -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    candidate = ingest.parse_stream(_read_bytes(args.candidate))
    labels = ingest.parse_stream(_read_bytes(args.labels))
    cfg = MatchConfig(
        iou_threshold=args.iou,
        teacher_score_threshold=args.label_score_threshold,
    )
    report = relative_map(candidate, labels, cfg)
    data = (json.dumps(report.to_json_dict(), indent=2, allow_nan=False) + "\n").encode("utf-8")
    _write_bytes(args.out, data)
    print(f"rmap {report.rmap:.2f} over {len(report.per_class_ap)} classes -> {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    if args.profile is not None:
        raw = _read_bytes(args.profile)
        profile = parse_profile(raw)
        try:
            name = json.loads(raw.decode("utf-8")).get("name")
        except (ValueError, UnicodeDecodeError):
            name = None
    else:
        profile = pretrained_student_profile()
        name = None
    source_id = name if isinstance(name, str) and name else "sim"
    params = DomainParams(
        num_frames=args.frames,
        class_count=args.classes,
        hard_frame_fraction=args.hard_fraction,
    )
    domain = generate_domain(args.seed, params)
    stream = simulate_detector(domain, profile, args.seed, source_id=source_id)
    _write_bytes(args.out, ingest.write_stream(stream))
    total = sum(len(f.detections) for f in stream.frames)
    print(f"simulated {len(stream.frames)} frames, {total} detections -> {args.out}")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = parse_pipeline_config(_read_bytes(args.config), base_dir=Path(args.config).parent)
    report = run_pipeline(cfg)
    print(
        f"pipeline done: strategy {report.strategy}, n {report.n_used}/{report.frames_total} "
        f"(culled {report.frames_culled_fraction:.1%}), "
        f"rmap {report.rmap_before:.2f} -> {report.rmap_after:.2f}"
    )
    print(f"report: {Path(cfg.output_dir) / 'report.json'}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = parse_pipeline_config(_read_bytes(args.config), base_dir=Path(args.config).parent)
    try:
        n_values = [int(v) for v in args.n.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--n must be a comma-separated list of integers: {exc}") from exc
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise UsageError(f"unknown strategy {strategy!r}, expected one of {STRATEGIES}")
    reports = sweep(cfg, n_values, strategies)
    for report in reports:
        print(
            f"{report.strategy:>6} n={report.n_used:<5} rmap_after={report.rmap_after:.2f} "
            f"(culled {report.frames_culled_fraction:.1%})"
        )
    print(f"table: {Path(cfg.output_dir) / 'sweep.json'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="distilcull",
        description="Teacher-student detection consistency scoring, difficult-frame "
                    "curation, and relative-mAP evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score teacher-student consistency per frame")
    p.add_argument("--teacher", required=True, help="teacher stream JSON")
    p.add_argument("--student", required=True, help="student stream JSON")
    p.add_argument("--iou", type=float, default=0.5, help="IoU match threshold")
    p.add_argument("--epsilon", type=float, default=0.5, help="consistency score epsilon")
    p.add_argument("--teacher-score-threshold", type=float, default=0.7)
    p.add_argument("--student-score-threshold", type=float, default=0.5)
    p.add_argument("--class-agnostic", action="store_true",
                   help="match boxes across classes instead of within one class")
    p.add_argument("--out", required=True, help="where to write scores JSON")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("curate", help="select frames and compile the dataset manifest")
    p.add_argument("--scores", required=True, help="scores JSON from the score command")
    p.add_argument("--teacher", required=True, help="teacher stream JSON (label source)")
    p.add_argument("--strategy", required=True, choices=list(STRATEGIES))
    p.add_argument("--n", required=True, type=int, help="target dataset size")
    p.add_argument("--out", required=True, help="where to write the manifest JSON")
    p.set_defaults(func=_cmd_curate)

    p = sub.add_parser("eval", help="relative mAP of a candidate stream against labels")
    p.add_argument("--candidate", required=True, help="candidate stream JSON")
    p.add_argument("--labels", required=True, help="label stream JSON (e.g. teacher)")
    p.add_argument("--iou", type=float, default=0.5, help="IoU match threshold")
    p.add_argument("--label-score-threshold", type=float, default=0.7,
                   help="labels below this confidence are not ground truth")
    p.add_argument("--out", required=True, help="where to write the report JSON")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("simulate", help="generate a synthetic detection stream")
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--frames", required=True, type=int, help="number of frames")
    p.add_argument("--classes", required=True, type=int, help="number of classes")
    p.add_argument("--profile", help="detector profile JSON (default: pretrained student)")
    p.add_argument("--hard-fraction", type=float, default=0.25,
                   help="fraction of frames drawn from the hard regime")
    p.add_argument("--out", required=True, help="where to write the stream JSON")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("pipeline", help="run the full loop from a config file")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("sweep", help="run a (n x strategy) grid from one snapshot")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--n", required=True, help="comma-separated dataset sizes")
    p.add_argument("--strategies", required=True, help="comma-separated strategies")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DistilcullError as exc:
        print(f"distilcull: error: {exc}", file=sys.stderr)
        return exc.exit_code
