"""Exception hierarchy shared by every module."""


class TabSeqError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(TabSeqError, ValueError):
    pass


class LabelError(TabSeqError, ValueError):
    pass


class ContractError(TabSeqError, ValueError):
    pass


class FormatError(TabSeqError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class AlignmentError(TabSeqError, ValueError):
    pass


class ConfigError(TabSeqError, ValueError):
    pass


class EncodeError(TabSeqError, ValueError):
    pass


class SpanReferenceError(TabSeqError, ValueError):
    pass


class CorruptionError(TabSeqError, ValueError):
    pass


class CoverageError(TabSeqError, ValueError):
    pass


class VersionError(TabSeqError, ValueError):
    pass


class InputError(TabSeqError, ValueError):
    pass


class TrainingError(TabSeqError, RuntimeError):
    pass
