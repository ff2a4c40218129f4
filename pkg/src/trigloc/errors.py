"""Exception hierarchy shared by every analysis stage."""

from __future__ import annotations


class AnalysisError(Exception):
    """Base class; ``code`` is the stable name written into report diagnostics."""

    code = "AnalysisError"


class EmptyTree(AnalysisError):
    code = "EmptyTree"


class SourceIOError(AnalysisError, OSError):
    code = "IoError"


class UnknownPath(AnalysisError, KeyError):
    code = "UnknownPath"


class MalformedDiff(AnalysisError):
    code = "MalformedDiff"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnanchoredHunk(AnalysisError):
    code = "UnanchoredHunk"


class NoPatchInFunction(AnalysisError):
    code = "NoPatchInFunction"


class NoCriticalVariables(AnalysisError):
    code = "NoCriticalVariables"


class SeedNotFound(AnalysisError):
    code = "SeedNotFound"


class UnsupportedCwe(AnalysisError):
    code = "UnsupportedCwe"


class NoTriggerFound(AnalysisError):
    code = "NoTriggerFound"


class NoEvidence(AnalysisError):
    code = "NoEvidence"


class ManifestError(AnalysisError):
    code = "ManifestError"


class MissingGroundTruth(AnalysisError):
    code = "MissingGroundTruth"

    def __init__(self, case_ids):
        self.case_ids = sorted(case_ids)
        super().__init__("cases without ground truth: " + ", ".join(self.case_ids))


class EmptyConfusion(AnalysisError, ValueError):
    code = "EmptyConfusion"
