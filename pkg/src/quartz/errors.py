"""Exception types shared across the pipeline."""


class QuartzError(Exception):
    """Base class for all pipeline errors."""


class PoolSizeError(QuartzError):
    """Pool too large for exhaustive Kemeny search."""


class IncompleteTableError(QuartzError):
    """A score table is missing an (subject, evaluator) entry."""


class InsufficientSampleError(QuartzError):
    """Not enough data points for the requested statistic."""


class UndefinedKappaError(QuartzError):
    """Chance agreement is 1 but observed agreement is not."""


class TemplateBindingError(QuartzError):
    """Placeholder bindings do not match the template."""


class ParseFailure(QuartzError):
    """A model reply did not match the expected structured format."""


class TransportError(QuartzError):
    """A retryable transport-level failure talking to a backend."""


class BackendUnavailableError(QuartzError):
    """Retries exhausted against a backend; carries the last failure."""

    def __init__(self, message: str, last_error: Exception | None = None):
        super().__init__(message)
        self.last_error = last_error


class ProtocolError(QuartzError):
    """A backend replied with something that is not a chat completion."""


class MockGapError(QuartzError):
    """The mock backend received a request it has no script for."""


class ArtifactNotFoundError(QuartzError):
    """Requested stage artifact does not exist for the run."""


class ArtifactFinalizedError(QuartzError):
    """Attempt to overwrite a finalized stage outside resume mode."""


class CorruptArtifactError(QuartzError):
    """Stage artifact content does not match its recorded digest."""


class ReplayMissError(QuartzError):
    """Replay mode hit an exchange that was never cached."""


class StageCellError(QuartzError):
    """A pipeline cell could not produce enough valid samples."""


class StageError(QuartzError):
    """A pipeline stage failed; identifies what went wrong."""


class ConfigError(QuartzError):
    """Run configuration is invalid; names the offending key."""
