"""Exception hierarchy shared across the pipeline.

Every error the CLI maps to an exit code lives here; modules raise these
instead of bare ValueError so callers can categorize failures.
"""


class EhrqaError(Exception):
    """Base class for all pipeline errors."""


class CorpusError(EhrqaError):
    """Malformed or inconsistent corpus data; message names the offending case/field."""


class ConfigError(EhrqaError):
    """Invalid or incomplete run configuration."""


class DependencyError(EhrqaError):
    """A required upstream artifact (answers file, questions file, ...) is missing."""


class BackendError(EhrqaError):
    """Base class for model-backend failures."""


class TransportError(BackendError):
    """Endpoint unreachable after retries."""

    def __init__(self, message: str, attempts: int = 0):
        super().__init__(message)
        self.attempts = attempts


class CapabilityError(BackendError):
    """The backend does not support the requested operation (e.g. pair scoring)."""


class EmptyOutputError(BackendError):
    """The model returned an empty completion."""


class GenerationError(EhrqaError):
    """A generation stage produced unusable output."""


class AlignmentParseError(EhrqaError):
    """Model output could not be parsed into an alignment map."""

    def __init__(self, message: str, raw_output: str = ""):
        super().__init__(message)
        self.raw_output = raw_output
