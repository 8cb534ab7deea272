"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, runtime errors
exit 2, numeric divergence exits 3.
"""


class FundusgenError(Exception):
    """Base class for all package errors."""


class ConfigError(FundusgenError):
    """Invalid or inconsistent configuration (unknown keys, bad shapes, ...)."""


class DataError(FundusgenError):
    """Unreadable/unwritable files, empty datasets, malformed manifests."""


class ChannelError(DataError):
    """Image does not carry the expected RGB channels."""


class ResolutionError(FundusgenError):
    """Spatial size outside the supported range for an operation."""


class CheckpointError(FundusgenError):
    """Missing, corrupt, or incompatible checkpoint contents."""


class NumericsError(FundusgenError):
    """Non-finite values where finite ones are required (training divergence)."""
