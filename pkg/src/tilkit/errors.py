"""Exception types shared across the toolkit."""


class TilError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TilError):
    """Invalid configuration value or inconsistent option combination."""


class ManifestError(TilError):
    """Dataset manifest failed validation; message names the field path."""


class InvalidDepthError(TilError):
    """Non-positive or unusable depth value."""


class DegenerateTrackError(TilError):
    """No frame of the wrist track carries a usable 3D position."""


class TooShortError(TilError):
    """Sequence too short for the requested operation."""


class WindowTooLargeError(TilError):
    """Video has fewer frames than the requested adjacent window."""


class MissingHandError(TilError):
    """No hand box and no keypoints available for a frame."""


class CandidatesExhausted(TilError):
    """All anchor candidates of a plan have been consumed."""


class UnparseableResponseError(TilError):
    """Model text contained no recognizable verdict token."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class BackendUnavailableError(TilError):
    """Remote backend failed after exhausting retries."""


class TestScriptError(TilError):
    """Scripted backend had no reply queued for the requested role."""

    __test__ = False  # not a pytest class despite the name


class ResultParseError(TilError):
    """Result file on disk is malformed."""
