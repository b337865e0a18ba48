"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class InvalidIdentifier(EngineError):
    """A group or user id is empty or contains the reserved separator."""


class OcrUnavailable(EngineError):
    """The OCR backend failed or timed out."""


class EmbeddingUnavailable(EngineError):
    """The embedding backend failed, timed out, or returned garbage."""


class DimensionMismatch(EngineError):
    """A vector's dimensionality does not match the index."""


class CorruptStore(EngineError):
    """A persisted store is missing, truncated, or fails validation."""


class ContextOverflow(EngineError):
    """A request would exceed the selected backend's token window."""


class TransientBackendError(EngineError):
    """A wire-level failure (timeout, 5xx, connection reset) worth retrying."""


class PermanentBackendError(EngineError):
    """A backend failure that retrying cannot fix (4xx, unmapped fixture)."""


class BackendUnavailable(EngineError):
    """All attempts against a chat backend failed."""


class ParseFailure(EngineError):
    """A backend reply did not contain a usable integer score."""


class UnscorableResponse(EngineError):
    """The backend replied, but no score could be parsed even after retry."""


class NoCapableBackend(EngineError):
    """No configured backend satisfies the capability and token needs."""


class SourceMissing(EngineError):
    """A chunk references a document the store no longer holds."""


class RepoUnavailable(EngineError):
    """A repository search root does not exist or cannot be read."""


class PagingDisabled(EngineError):
    """A paging operation was invoked while the feature is switched off."""


class ModerationUnavailable(EngineError):
    """The external moderation service failed; callers must fail closed."""


class DegenerateCorpus(EngineError):
    """An evaluation corpus contains only one label."""


class NotFound(EngineError):
    """A reply id is unknown."""


class InvalidState(EngineError):
    """A reply state transition is not allowed from the current state."""


class ConfigError(EngineError):
    """The service configuration is missing or fails validation."""
