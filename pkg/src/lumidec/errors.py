"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration errors exit 2, data and
shape errors exit 3, numeric failures exit 4, checkpoint/file problems exit 5.
"""


class LumidecError(Exception):
    """Base class for all package errors."""


class ConfigError(LumidecError):
    """Invalid configuration: bad flag values, unknown variants, missing specs."""


class DataError(LumidecError):
    """Dataset-level problems: empty pairings, missing directories."""


class DecodeError(DataError):
    """A single file could not be decoded or has an unsupported format."""


class DimensionError(LumidecError):
    """Tensor or image extents violate an operation's shape contract."""


class ContractError(LumidecError):
    """A precondition other than shape was violated (ranges, state, ownership)."""


class NumericError(LumidecError):
    """Non-finite values where finite ones are required (NaN/Inf loss or grads)."""


class CheckpointError(LumidecError):
    """Checkpoint file is malformed, truncated, corrupt, or version-incompatible."""
