"""Exception types raised across the package."""


class HpdrError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(HpdrError, ValueError):
    """Bad arguments or malformed in-memory inputs."""


class StagingCapacityError(HpdrError):
    """A group stage requested more fast-tier scratch than the adapter declares."""


class AllocationError(HpdrError):
    """Buffer allocation for a reduction context failed."""


class CorruptStreamError(HpdrError):
    """An encoded bit stream failed to decode.

    ``bit_offset`` points at the first bit position that could not be
    resolved to a valid codeword (or -1 when unknown).
    """

    def __init__(self, message: str, bit_offset: int = -1):
        super().__init__(message)
        self.bit_offset = bit_offset


class FormatError(HpdrError):
    """Container bytes are truncated, checksum-invalid, or of an unknown kind."""
