import json
import sys
import textwrap

import pytest

from distilcull import ingest
from distilcull.adapters import AdapterSpec, run_detect, run_train
from distilcull.errors import AdapterError, AdapterTimeout, UsageError, ValidationError
from distilcull.types import CuratedDataset, CurationProvenance

ECHO_DETECTOR = textwrap.dedent(
    """
    import json, sys
    refs = [line for line in open(sys.argv[1], encoding="utf-8").read().splitlines() if line]
    drop = int(sys.argv[3]) if len(sys.argv) > 3 else 0
    frames = [
        {"frame_index": i, "image_ref": ref,
         "detections": [{"class": "car", "score": 0.9, "bbox": [10, 10, 40, 30]}]}
        for i, ref in enumerate(refs)
    ]
    if drop:
        frames = frames[:-drop]
    doc = {"schema_version": "distilcull/1", "source_id": "echo",
           "class_table": ["car"], "frames": frames}
    with open(sys.argv[2], "w", encoding="utf-8") as out:
        json.dump(doc, out)
    """
)


def _script(tmp_path, name, body):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return str(path)


def _detect_spec(tmp_path, extra_args=(), timeout=30.0, body=ECHO_DETECTOR):
    script = _script(tmp_path, "detector.py", body)
    command = (sys.executable, script, "{input}", "{output}", *extra_args)
    return AdapterSpec(command=command, timeout=timeout, kind="detect")


def test_echo_detector_round_trips_image_list(tmp_path):
    spec = _detect_spec(tmp_path)
    refs = [f"cam0/{i}.jpg" for i in range(5)]
    stream = run_detect(spec, refs, exchange_dir=tmp_path / "xchg")
    assert [f.frame_index for f in stream.frames] == list(range(5))
    assert [f.image_ref for f in stream.frames] == refs
    assert stream.source_id == "echo"


def test_failing_adapter_reports_exit_code(tmp_path):
    body = "import sys; sys.stderr.write('boom\\n'); sys.exit(1)\n"
    script = _script(tmp_path, "bad.py", body)
    spec = AdapterSpec((sys.executable, script, "{input}", "{output}"), timeout=30)
    with pytest.raises(AdapterError, match="code 1") as excinfo:
        run_detect(spec, ["a.jpg"])
    assert excinfo.value.returncode == 1
    assert "boom" in str(excinfo.value)


def test_sleeping_adapter_times_out(tmp_path):
    body = "import sys, time\nopen(sys.argv[2], 'w').write('late')\ntime.sleep(30)\n"
    script = _script(tmp_path, "slow.py", body)
    spec = AdapterSpec((sys.executable, script, "{input}", "{output}"), timeout=1.0)
    with pytest.raises(AdapterTimeout):
        run_detect(spec, ["a.jpg"])


def test_truncated_output_names_frame_count_mismatch(tmp_path):
    spec = _detect_spec(tmp_path, extra_args=("1",))
    with pytest.raises(ValidationError, match="2 frames, expected 3"):
        run_detect(spec, ["a.jpg", "b.jpg", "c.jpg"])


def test_unparseable_output_wrapped_with_adapter_identity(tmp_path):
    body = "import sys\nopen(sys.argv[2], 'w').write('not json')\n"
    spec = _detect_spec(tmp_path, body=body)
    with pytest.raises(ValidationError, match="output invalid"):
        run_detect(spec, ["a.jpg"])


def test_missing_output_file_is_adapter_error(tmp_path):
    body = "import sys\n"
    spec = _detect_spec(tmp_path, body=body)
    with pytest.raises(AdapterError, match="no output"):
        run_detect(spec, ["a.jpg"])


def test_wrong_frame_indices_rejected(tmp_path):
    body = textwrap.dedent(
        """
        import json, sys
        doc = {"schema_version": "distilcull/1", "source_id": "x", "class_table": [],
               "frames": [{"frame_index": 5, "image_ref": "a", "detections": []}]}
        json.dump(doc, open(sys.argv[2], "w"))
        """
    )
    spec = _detect_spec(tmp_path, body=body)
    with pytest.raises(ValidationError, match="does not match input line"):
        run_detect(spec, ["a.jpg"])


def test_command_template_placeholders_enforced():
    with pytest.raises(UsageError, match="input"):
        AdapterSpec(("tool", "{output}"))
    with pytest.raises(UsageError, match="output"):
        AdapterSpec(("tool", "{input}"))
    with pytest.raises(UsageError, match="exactly once"):
        AdapterSpec(("tool", "{input}", "{input}", "{output}"))


def test_command_string_is_split_like_a_shell():
    spec = AdapterSpec("python 'my tool.py' {input} {output}")
    assert spec.command == ("python", "my tool.py", "{input}", "{output}")


def test_kind_mismatch_is_usage_error(tmp_path):
    detect = _detect_spec(tmp_path)
    with pytest.raises(UsageError, match="train"):
        run_train(detect, tmp_path / "whatever.json")


def _write_manifest(tmp_path):
    prov = CurationProvenance(
        teacher="t", strategy="dds", n=0,
        teacher_score_threshold=0.7, student_score_threshold=0.5,
        iou_threshold=0.5, epsilon=0.5,
    )
    data = ingest.write_manifest(CuratedDataset(prov, ("car",), ()))
    path = tmp_path / "manifest.json"
    path.write_bytes(data)
    return path


def test_noop_trainer_reports_duration(tmp_path):
    manifest = _write_manifest(tmp_path)
    body = "import sys\nopen(sys.argv[2], 'w').write('trained')\n"
    script = _script(tmp_path, "trainer.py", body)
    spec = AdapterSpec((sys.executable, script, "{input}", "{output}"), timeout=30, kind="train")
    report = run_train(spec, manifest, exchange_dir=tmp_path / "xchg")
    assert report.returncode == 0
    assert 0.0 < report.duration_s < 30.0


def test_missing_manifest_fails_before_invocation(tmp_path):
    marker = tmp_path / "ran.txt"
    body = f"import sys, pathlib\npathlib.Path({str(marker)!r}).write_text('ran')\n"
    script = _script(tmp_path, "trainer.py", body + "open(sys.argv[2], 'w').write('x')\n")
    spec = AdapterSpec((sys.executable, script, "{input}", "{output}"), kind="train")
    with pytest.raises(UsageError, match="not found"):
        run_train(spec, tmp_path / "nope.json")
    assert not marker.exists()


def test_invalid_manifest_fails_before_invocation(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": "distilcull/1"}), encoding="utf-8")
    body = "import sys\nopen(sys.argv[2], 'w').write('x')\n"
    script = _script(tmp_path, "trainer.py", body)
    spec = AdapterSpec((sys.executable, script, "{input}", "{output}"), kind="train")
    with pytest.raises(ValidationError, match="provenance"):
        run_train(spec, bad)


def test_stderr_captured_to_log(tmp_path):
    body = ECHO_DETECTOR.replace(
        'import json, sys', 'import json, sys\nsys.stderr.write("detector warming up\\n")'
    )
    spec = _detect_spec(tmp_path, body=body)
    log = tmp_path / "logs" / "detect.log"
    run_detect(spec, ["a.jpg"], log_path=log)
    assert "warming up" in log.read_text(encoding="utf-8")
