"""Exception taxonomy shared by every distilcull module.

The CLI maps these onto process exit codes: 0 success, 2 usage or
configuration error, 3 adapter failure, 4 validation failure.
"""

from __future__ import annotations


class DistilcullError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(DistilcullError):
    """Bad arguments, bad configuration, or a violated call precondition."""

    exit_code = 2


class AdapterError(DistilcullError):
    """An external adapter process failed, crashed, or could not start."""

    exit_code = 3

    def __init__(self, message: str, *, command: str | None = None,
                 returncode: int | None = None, stderr: str | None = None):
        parts = [message]
        if command:
            parts.append(f"command: {command}")
        if stderr and stderr.strip():
            tail = stderr.strip().splitlines()[-10:]
            parts.append("stderr: " + " | ".join(tail))
        super().__init__("; ".join(parts))
        self.command = command
        self.returncode = returncode
        self.stderr = stderr


class AdapterTimeout(AdapterError):
    """The adapter exceeded its configured timeout and was terminated."""


class ValidationError(DistilcullError):
    """Data violates the schema or an invariant.

    Carries every violation found, not just the first one, so a bad file
    can be fixed in one pass.
    """

    exit_code = 4

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ParseError(ValidationError):
    """Input is not syntactically well-formed; `byte_offset` locates it."""

    def __init__(self, message: str, *, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class UnsupportedVersionError(ValidationError):
    """The document declares a schema_version this build does not read."""


class PipelineStageError(DistilcullError):
    """A pipeline stage failed; wraps the cause and names the stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self) -> int:  # type: ignore[override]
        return getattr(self.cause, "exit_code", 1)
