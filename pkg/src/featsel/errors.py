"""Exception types shared across the toolkit."""


class FeatselError(Exception):
    """Base class for all toolkit errors."""


class DomainError(FeatselError):
    """A value or combination of values violates an operation's contract."""


class FormatError(FeatselError):
    """A file or bitstream does not conform to its declared format.

    ``offset`` is the byte position at which the problem was detected,
    when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
