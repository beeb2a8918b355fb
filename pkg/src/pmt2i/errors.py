"""Exception types shared across the package.

The CLI maps these onto exit codes: validation problems exit 2, backend
failures exit 3, anything else exits 4.
"""


class Pmt2iError(Exception):
    """Base class for all package errors."""


class ValidationError(Pmt2iError):
    """Invalid input, configuration, or precondition."""


class PromptError(ValidationError):
    """Bad prompt construction input or variant-space access."""


class DatasetError(ValidationError):
    """Malformed or inconsistent dataset file."""


class ConfigError(ValidationError):
    """Invalid run configuration."""


class BackendError(Pmt2iError):
    """Failure reaching or understanding a backend."""


class BackendUnavailable(BackendError):
    """Network-level failure that persisted through the retry budget."""


class ProtocolError(BackendError):
    """The backend answered, but outside its declared contract."""


class GenerationRefused(BackendError):
    """The generation backend declined to render the prompt."""


class PipelineError(Pmt2iError):
    """Internal orchestration failure."""
