"""Exception types shared across the package."""

from __future__ import annotations


class SearchloopError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SearchloopError):
    pass


class DuplicateChunkId(SearchloopError):
    pass


class EmptyCorpus(SearchloopError):
    pass


class UnknownChunk(SearchloopError):
    pass


class DecompositionFailed(SearchloopError):
    pass


class GenerationFailed(SearchloopError):
    pass


class FeedbackRejected(SearchloopError):
    """An event failed validation against the current session snapshot."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code
        self.detail = detail


class StageExecutionError(SearchloopError):
    """Re-execution of a pipeline stage failed after an event was logged."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


class CorruptLog(SearchloopError):
    pass


class VersionMismatch(SearchloopError):
    pass


class ForeignLog(SearchloopError):
    pass


class ExpiredProposal(SearchloopError):
    pass


class Unpublishable(SearchloopError):
    pass


class UnresolvableReference(SearchloopError):
    pass


class AllStepsUnresolvable(SearchloopError):
    pass


class InsufficientCredits(SearchloopError):
    pass


class UnknownTemplate(SearchloopError):
    pass
