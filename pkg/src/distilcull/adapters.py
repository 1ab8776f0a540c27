"""Subprocess bridge to external detector and trainer executables.

The exchange protocol is file-based so adapters can be written in any
ecosystem: a newline-delimited image list goes in, a stream document comes
out, and the command template names both through {input} and {output}.
Exit 0 means success; stderr is captured and, when a log path is given,
persisted for the run. Adapters must not touch anything but their
designated {output} path; every exchange file lives under one run-scoped
directory that can be deleted afterwards.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import ingest
from .errors import AdapterError, AdapterTimeout, UsageError, ValidationError
from .types import DetectionStream

KIND_DETECT = "detect"
KIND_TRAIN = "train"


@dataclass(frozen=True, slots=True)
class AdapterSpec:
    """How to invoke one external executable.

    `command` is an argv template; across all its arguments the
    placeholders {input} and {output} must each appear exactly once.
    """

    command: tuple[str, ...]
    working_dir: str | None = None
    timeout: float | None = None
    kind: str = KIND_DETECT

    def __post_init__(self):
        command = self.command
        if isinstance(command, str):
            command = tuple(shlex.split(command))
            object.__setattr__(self, "command", command)
        else:
            object.__setattr__(self, "command", tuple(command))
        if not self.command:
            raise UsageError("adapter command must not be empty")
        for placeholder in ("{input}", "{output}"):
            count = sum(arg.count(placeholder) for arg in self.command)
            if count != 1:
                raise UsageError(
                    f"adapter command must contain {placeholder} exactly once, "
                    f"found {count}: {' '.join(self.command)}"
                )
        if self.kind not in (KIND_DETECT, KIND_TRAIN):
            raise UsageError(f"adapter kind must be 'detect' or 'train', got {self.kind!r}")
        if self.timeout is not None and self.timeout <= 0:
            raise UsageError(f"adapter timeout must be > 0 seconds, got {self.timeout!r}")

    @property
    def display(self) -> str:
        return " ".join(self.command)


@dataclass(frozen=True, slots=True)
class TrainReport:
    """Trainer completion: its exit status and wall-clock duration."""

    returncode: int
    duration_s: float


def _invoke(adapter: AdapterSpec, input_path: Path, output_path: Path,
            log_path: Path | None) -> None:
    argv = [
        arg.replace("{input}", str(input_path)).replace("{output}", str(output_path))
        for arg in adapter.command
    ]
    try:
        proc = subprocess.run(
            argv,
            cwd=adapter.working_dir,
            timeout=adapter.timeout,
            capture_output=True,
            text=True,
        )
    except subprocess.TimeoutExpired as exc:
        _write_log(log_path, exc.stderr)
        raise AdapterTimeout(
            f"adapter timed out after {adapter.timeout}s and was terminated",
            command=adapter.display,
        ) from exc
    except OSError as exc:
        raise AdapterError(f"adapter failed to start: {exc}", command=adapter.display) from exc
    _write_log(log_path, proc.stderr)
    if proc.returncode != 0:
        raise AdapterError(
            f"adapter exited with code {proc.returncode}",
            command=adapter.display,
            returncode=proc.returncode,
            stderr=proc.stderr,
        )


def _write_log(log_path: Path | None, stderr) -> None:
    if log_path is None:
        return
    log_path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(stderr, bytes):
        stderr = stderr.decode("utf-8", "replace")
    log_path.write_text(stderr or "", encoding="utf-8")


def _exchange_dir(exchange_dir: str | Path | None):
    if exchange_dir is not None:
        path = Path(exchange_dir)
        path.mkdir(parents=True, exist_ok=True)
        return None, path
    tmp = tempfile.TemporaryDirectory(prefix="distilcull-adapter-")
    return tmp, Path(tmp.name)


def run_detect(
    adapter: AdapterSpec,
    image_refs: Sequence[str],
    exchange_dir: str | Path | None = None,
    log_path: str | Path | None = None,
) -> DetectionStream:
    """Detect over an image list and parse the adapter's stream output.

    The returned stream has one frame per input line with frame_index
    equal to the line number; any count or index mismatch is a validation
    error, because a silently truncated output would poison every score
    computed from it.
    """
    if adapter.kind != KIND_DETECT:
        raise UsageError(f"run_detect needs a detect adapter, got kind {adapter.kind!r}")
    refs = list(image_refs)
    log = Path(log_path) if log_path is not None else None
    tmp, root = _exchange_dir(exchange_dir)
    try:
        input_path = root / "images.txt"
        output_path = root / "detections.json"
        input_path.write_text("".join(ref + "\n" for ref in refs), encoding="utf-8")
        _invoke(adapter, input_path, output_path, log)
        if not output_path.is_file():
            raise AdapterError(
                "adapter exited 0 but wrote no output file", command=adapter.display
            )
        try:
            stream = ingest.parse_stream(output_path.read_bytes())
        except ValidationError as exc:
            raise ValidationError(
                [f"adapter '{adapter.display}' output invalid: {v}" for v in exc.violations]
            ) from exc
        if len(stream.frames) != len(refs):
            raise ValidationError(
                f"adapter '{adapter.display}' output has {len(stream.frames)} frames, "
                f"expected {len(refs)} (one per image list line)"
            )
        for line_no, frame in enumerate(stream.frames):
            if frame.frame_index != line_no:
                raise ValidationError(
                    f"adapter '{adapter.display}' frame_index {frame.frame_index} "
                    f"does not match input line {line_no}"
                )
        return stream
    finally:
        if tmp is not None:
            tmp.cleanup()


def run_train(
    adapter: AdapterSpec,
    manifest_path: str | Path,
    exchange_dir: str | Path | None = None,
    log_path: str | Path | None = None,
) -> TrainReport:
    """Invoke the trainer on a manifest and report its wall-clock duration."""
    if adapter.kind != KIND_TRAIN:
        raise UsageError(f"run_train needs a train adapter, got kind {adapter.kind!r}")
    manifest = Path(manifest_path)
    if not manifest.is_file():
        raise UsageError(f"manifest not found: {manifest}")
    ingest.parse_manifest(manifest.read_bytes())
    log = Path(log_path) if log_path is not None else None
    tmp, root = _exchange_dir(exchange_dir)
    try:
        output_path = root / "train_output.txt"
        start = time.perf_counter()
        _invoke(adapter, manifest, output_path, log)
        return TrainReport(returncode=0, duration_s=time.perf_counter() - start)
    finally:
        if tmp is not None:
            tmp.cleanup()
