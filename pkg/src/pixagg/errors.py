"""Exception types raised across the package."""


class PixaggError(Exception):
    pass


class InvalidShapeError(PixaggError, ValueError):
    pass


class InvalidInputError(PixaggError, ValueError):
    pass


class InvalidGridError(PixaggError, ValueError):
    pass


class InvalidPartitionError(PixaggError, ValueError):
    pass


class InvalidParamsError(PixaggError, ValueError):
    pass


class ConfigError(PixaggError, ValueError):
    pass


class FormatError(PixaggError, IOError):
    """Malformed file contents. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TruncatedFileError(FormatError):
    pass
