"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: config problems exit 2, data problems
exit 3, numeric failures exit 4.
"""


class ShapeError(ValueError):
    """Operand shapes do not satisfy an operation's contract."""


class ParameterError(ValueError):
    """An operation parameter is out of its documented range."""


class ContractError(RuntimeError):
    """An API was used outside its documented contract."""


class NumericOverflowError(FloatingPointError):
    """An operation produced NaN/Inf; overflow is an error, never a value."""


class DegenerateVectorError(ValueError):
    """A zero-norm vector reached a similarity computation."""


class InsufficientDataError(ValueError):
    """Not enough patches or features to form the requested sample."""


class TrainingDivergedError(RuntimeError):
    """A training loop hit non-finite loss or updates."""


class FrozenParameterError(RuntimeError):
    """An optimizer was asked to update a frozen tensor; must be unreachable."""


class WindowSizeError(ValueError):
    """Window length is incompatible with the patch length."""


class DataValidationError(ValueError):
    """Series data violates a basic validity requirement (NaN, bad labels)."""


class ManifestViolationError(ValueError):
    """Loaded dataset files disagree with their manifest."""


class CheckpointFormatError(ValueError):
    """A checkpoint file has a bad magic, version, or record layout."""


class UndefinedMetricError(ValueError):
    """A metric is undefined for the given labels (e.g. single-class AUC)."""


class ConfigError(ValueError):
    """A run configuration failed validation."""


CONFIG_ERRORS = (ConfigError, ParameterError)
DATA_ERRORS = (
    ManifestViolationError,
    DataValidationError,
    WindowSizeError,
    InsufficientDataError,
    UndefinedMetricError,
    CheckpointFormatError,
)
NUMERIC_ERRORS = (
    NumericOverflowError,
    TrainingDivergedError,
    DegenerateVectorError,
    FrozenParameterError,
)
