"""Exception types shared across the pipeline.

CLI exit-code mapping: ParseError and OS-level failures exit 4,
ValidationError (and subclasses) exit 3, a no-decision mapping exits 2.
"""


class GapmarkError(Exception):
    """Base class for all pipeline errors."""


class ParseError(GapmarkError):
    """Malformed input file; carries the offending path/line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where = f" [{where}]"
        super().__init__(f"{message}{where}")


class ValidationError(GapmarkError):
    """A contract or invariant was violated."""


class RangeError(ValidationError):
    """Requested interval lies outside the stream extent."""


class SizeError(ValidationError):
    """Input too short for the requested operation."""


class AlignmentError(ValidationError):
    """Streams do not share a usable common time axis (coverage gap)."""


class KeySegmentError(GapmarkError):
    """No acoustic window predicts the mapped label; annotation aborted."""


class StageError(GapmarkError):
    """Pipeline stage failure wrapper, tagging the failing stage."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
