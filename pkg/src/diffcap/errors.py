"""Exception types shared across the package."""


class DiffcapError(Exception):
    """Base class for all diffcap errors."""


class InvalidInputError(DiffcapError):
    """An argument violates a documented precondition."""


class EmptyClusterSetError(DiffcapError):
    """An operation that needs at least one difference cluster got none."""


class FormatError(DiffcapError):
    """A serialized artifact (feature file, checkpoint) is malformed."""
