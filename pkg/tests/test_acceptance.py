"""Acceptance suite: one test per release criterion, one printed line each.

Run with `pytest tests/test_acceptance.py -s` to see the pass/fail lines;
each test also asserts its stated runtime budget.
"""

import dataclasses
import json
import sys
import time
from fractions import Fraction

import numpy as np

from conftest import det, frame, random_stream, stream
from distilcull import ingest
from distilcull.curation import CurationConfig, ScoredFrame, l_train, select_dds
from distilcull.evaluation import average_precision, pr_curve, relative_map
from distilcull.matching import MatchConfig, confusion_counts, iou, match_frame
from distilcull.pipeline import PipelineConfig, SimulationSource, run_pipeline, sweep
from distilcull.simulation import DomainParams
from distilcull.types import BoundingBox, ConfusionCounts, Detection, DatasetEntry
from oracles import best_subset_score_sum, naive_match, pixel_grid_iou
from test_adapters import ECHO_DETECTOR, _script


class _Budget:
    def __init__(self, number: int, label: str, seconds: float):
        self.number = number
        self.label = label
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        status = "PASS" if exc_type is None and elapsed < self.seconds else "FAIL"
        print(
            f"[{status}] criterion {self.number}: {self.label} "
            f"({elapsed:.1f}s / budget {self.seconds:.0f}s)"
        )
        if exc_type is None:
            assert elapsed < self.seconds, (
                f"criterion {self.number} exceeded its runtime budget: "
                f"{elapsed:.1f}s >= {self.seconds}s"
            )
        return False


def test_criterion_1_consistency_score_unit_suite():
    with _Budget(1, "consistency score formula and monotonicity", 1.0):
        cases = {
            (0, 0, 0): Fraction(0),
            (1, 0, 0): Fraction(4, 3),
            (0, 2, 1): Fraction(6),
            (2, 1, 3): Fraction(16, 5),
        }
        for (tp, fp, fn), expected in cases.items():
            value = l_train(ConfusionCounts(tp, fp, fn), 0.5)
            assert abs(value - float(expected)) < 1e-12, (tp, fp, fn)
        for tp in range(11):
            for fp in range(11):
                for fn in range(11):
                    base = l_train(ConfusionCounts(tp, fp, fn), 0.5)
                    assert l_train(ConfusionCounts(tp, fp + 1, fn), 0.5) > base
                    assert l_train(ConfusionCounts(tp, fp, fn + 1), 0.5) > base


def test_criterion_2_matching_oracle_equivalence():
    with _Budget(2, "greedy matching equals naive oracle; IoU equals pixel grid", 10.0):
        rng = np.random.default_rng(2)
        cfg = MatchConfig()

        def random_frame():
            dets = []
            for _ in range(int(rng.integers(0, 5))):
                dets.append(
                    det(
                        float(rng.uniform(0, 40)), float(rng.uniform(0, 40)),
                        float(rng.uniform(2, 25)), float(rng.uniform(2, 25)),
                        class_id=int(rng.integers(0, 2)),
                        score=float(rng.uniform(0, 1)),
                    )
                )
            return frame(0, dets)

        for _ in range(1000):
            teacher, student = random_frame(), random_frame()
            result = match_frame(teacher, student, cfg)
            pairs = {(s, t) for s, t, _ in result.pairs}
            oracle_pairs, tp, fp, fn = naive_match(teacher, student, 0.5, 0.7, 0.5, True)
            counts = confusion_counts(result)
            assert pairs == oracle_pairs
            assert (counts.tp, counts.fp, counts.fn) == (tp, fp, fn)

        for _ in range(200):
            a = BoundingBox(
                int(rng.integers(0, 20)), int(rng.integers(0, 20)),
                int(rng.integers(1, 10)), int(rng.integers(1, 10)),
            )
            b = BoundingBox(
                int(rng.integers(0, 20)), int(rng.integers(0, 20)),
                int(rng.integers(1, 10)), int(rng.integers(1, 10)),
            )
            assert abs(iou(a, b) - pixel_grid_iou(a, b)) < 1e-6


def test_criterion_3_average_precision_correctness():
    with _Budget(3, "hand-derived AP case, self-eval = 100, rank-only invariance", 10.0):
        labels = stream([frame(0, [det(0, 0, 10, 10, 0, 0.95)])])
        candidate = stream(
            [frame(0, [det(100, 100, 10, 10, 0, 0.9), det(0, 0, 10, 10, 0, 0.8)])]
        )
        curve = pr_curve(candidate, labels, 0, MatchConfig())
        assert [(p.recall, p.precision) for p in curve] == [(0.0, 0.0), (1.0, 0.5)]
        assert average_precision(curve) == 0.5

        rng = np.random.default_rng(3)
        produced = 0
        while produced < 20:
            s = random_stream(rng, n_frames=int(rng.integers(1, 7)),
                              score_low=0.7, score_high=1.0)
            if not any(f.detections for f in s.frames):
                continue
            produced += 1
            assert relative_map(s, s, MatchConfig()).rmap == 100.0

        transforms = [
            lambda v: v * v,
            lambda v: 0.05 + 0.9 * v,
            lambda v: v / (1.0 + v),
            lambda v: float(np.sqrt(v)),
        ]
        produced = 0
        while produced < 100:
            labels = random_stream(rng, n_frames=int(rng.integers(1, 5)),
                                   score_low=0.7, score_high=1.0)
            if not any(f.detections for f in labels.frames):
                continue
            candidate = random_stream(rng, n_frames=len(labels.frames),
                                      class_table=labels.class_table)
            candidate = dataclasses.replace(
                candidate,
                frames=tuple(
                    dataclasses.replace(f, frame_index=lf.frame_index)
                    for f, lf in zip(candidate.frames, labels.frames)
                ),
            )
            produced += 1
            base = relative_map(candidate, labels, MatchConfig()).rmap
            transform = transforms[produced % len(transforms)]
            rescored = dataclasses.replace(
                candidate,
                frames=tuple(
                    dataclasses.replace(
                        f,
                        detections=tuple(
                            Detection(d.box, d.class_id, transform(d.score))
                            for d in f.detections
                        ),
                    )
                    for f in candidate.frames
                ),
            )
            assert relative_map(rescored, labels, MatchConfig()).rmap == base


def test_criterion_4_selection_attains_bruteforce_maximum():
    with _Budget(4, "difficult-frame selection is sum-optimal", 10.0):
        from math import fsum

        rng = np.random.default_rng(4)
        for _ in range(200):
            size = int(rng.integers(1, 13))
            n = int(rng.integers(0, 7))
            scored = [
                ScoredFrame(i, ConfusionCounts(0, 0, 0), float(rng.uniform(0, 8)))
                for i in range(size)
            ]
            chosen = select_dds(scored, n)
            assert len(chosen) == min(n, size)
            by_index = {s.frame_index: s.l_train for s in scored}
            chosen_sum = fsum(by_index[i] for i in chosen)
            best = best_subset_score_sum([s.l_train for s in scored], n)
            if n == 0:
                assert chosen_sum == 0.0
            else:
                assert chosen_sum >= best - 1e-12


def test_criterion_5_end_to_end_budget_sweep_shape():
    with _Budget(5, "50-domain sweep: dds beats simple, drop shrinks with budget", 300.0):
        grid = [64, 128, 256, 512]
        cells_total = 0
        cells_dds_wins = 0
        for d in range(50):
            seed = 1000 + d
            cfg = PipelineConfig(
                source=SimulationSource(
                    seed=seed,
                    domain=DomainParams(num_frames=7200, class_count=1 + d % 4),
                ),
                curation=CurationConfig(n=256, strategy="dds"),
                eval=MatchConfig(),
                output_dir="unused",
            )
            rows = sweep(cfg, grid + [3600], ["simple", "dds"], persist=False)
            by = {(r.strategy, r.n_used): r for r in rows}
            full = by[("dds", 3600)].rmap_after

            # (b) accuracy drop versus full training never grows with the budget
            drops = [full - by[("dds", n)].rmap_after for n in grid]
            for small_budget, larger_budget in zip(drops, drops[1:]):
                assert larger_budget <= small_budget + 1e-9, (seed, drops)

            # (c) the fixed 256-frame budget culls 3344 of 3600 training frames
            for strategy in ("simple", "dds"):
                row = by[(strategy, 256)]
                assert row.frames_total == 3600
                assert abs(row.frames_culled_fraction - (1 - 256 / 3600)) < 1e-12

            for n in grid:
                cells_total += 1
                if by[("dds", n)].rmap_after >= by[("simple", n)].rmap_after:
                    cells_dds_wins += 1

        # (a) the difficult-frame strategy wins at least 90% of cells
        assert cells_total == 200
        assert cells_dds_wins >= 0.9 * cells_total, f"{cells_dds_wins}/{cells_total}"


def test_criterion_6_determinism_and_round_trips(tmp_path):
    with _Budget(6, "byte-identical reruns; exact file round-trips", 30.0):
        cfg = PipelineConfig(
            source=SimulationSource(
                seed=17, domain=DomainParams(num_frames=400, class_count=3)
            ),
            curation=CurationConfig(n=48, strategy="dds"),
            eval=MatchConfig(),
            output_dir=str(tmp_path / "run"),
        )
        run_pipeline(cfg)
        out = tmp_path / "run"
        names = [
            "teacher_stream.json", "student_before_stream.json", "scores.json",
            "manifest.json", "student_after_stream.json", "report.json",
        ]
        first = {name: (out / name).read_bytes() for name in names}
        run_pipeline(cfg)
        for name in names:
            second = (out / name).read_bytes()
            if name == "report.json":
                a, b = json.loads(first[name]), json.loads(second)
                a.pop("durations"), b.pop("durations")
                assert a == b
            else:
                assert second == first[name], f"{name} changed between identical runs"

        rng = np.random.default_rng(6)
        for _ in range(500):
            s = random_stream(rng)
            assert ingest.parse_stream(ingest.write_stream(s)) == s
        for _ in range(500):
            dataset = _random_dataset(rng)
            assert ingest.parse_manifest(ingest.write_manifest(dataset)) == dataset


def _random_dataset(rng):
    from distilcull.types import CuratedDataset, CurationProvenance

    entries = []
    index = 0
    for _ in range(int(rng.integers(0, 6))):
        labels = tuple(
            det(
                float(rng.uniform(0, 60)), float(rng.uniform(0, 60)),
                float(rng.uniform(1, 40)), float(rng.uniform(1, 40)),
                class_id=int(rng.integers(0, 2)),
                score=float(rng.uniform(0.7, 1.0)),
            )
            for _ in range(int(rng.integers(0, 4)))
        )
        entries.append(
            DatasetEntry(index, f"img/{index}", labels, float(rng.uniform(0, 9)))
        )
        index += int(rng.integers(1, 4))
    provenance = CurationProvenance(
        teacher="t", strategy="dds", n=len(entries),
        teacher_score_threshold=0.7, student_score_threshold=0.5,
        iou_threshold=0.5, epsilon=0.5,
    )
    return CuratedDataset(provenance, ("car", "person"), tuple(entries))


def test_criterion_7_adapter_protocol_conformance(tmp_path):
    with _Budget(7, "echo adapter pipeline; truncated detector exits 4", 10.0):
        detector = _script(tmp_path, "echo.py", ECHO_DETECTOR)
        trainer = _script(
            tmp_path, "train.py", "import sys\nopen(sys.argv[2], 'w').write('ok')\n"
        )

        def config(drop: int, out: str) -> dict:
            detect_cmd = [sys.executable, detector, "{input}", "{output}"]
            if drop:
                detect_cmd.append(str(drop))
            return {
                "source": {
                    "kind": "adapters",
                    "teacher": {"command": detect_cmd, "timeout": 60},
                    "student_detect": {
                        "command": [sys.executable, detector, "{input}", "{output}"],
                        "timeout": 60,
                    },
                    "student_train": {
                        "command": [sys.executable, trainer, "{input}", "{output}"],
                        "timeout": 60,
                    },
                    "image_refs": [f"cam/{i:03d}.jpg" for i in range(8)],
                },
                "curation": {"n": 2, "strategy": "dds"},
                "output_dir": out,
            }

        from distilcull.cli import main

        good = tmp_path / "good.json"
        good.write_text(json.dumps(config(0, str(tmp_path / "run_good"))), encoding="utf-8")
        assert main(["pipeline", "--config", str(good)]) == 0
        assert (tmp_path / "run_good" / "report.json").is_file()

        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(config(2, str(tmp_path / "run_bad"))), encoding="utf-8")
        import io
        from contextlib import redirect_stderr

        captured = io.StringIO()
        with redirect_stderr(captured):
            code = main(["pipeline", "--config", str(bad)])
        assert code == 4
        message = captured.getvalue()
        assert "6 frames, expected 8" in message
        assert "teacher_predict" in message
