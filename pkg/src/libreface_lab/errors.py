"""Exception hierarchy. Each category carries the process exit code the CLI maps it to."""


class LibreFaceError(Exception):
    exit_code = 1


class UsageError(LibreFaceError):
    """API misuse, e.g. running backward twice on the same tape."""


class ConfigError(LibreFaceError):
    exit_code = 2

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DataError(LibreFaceError):
    exit_code = 3


class ShapeError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class SchemaError(DataError):
    pass


class GeometryError(DataError):
    pass


class NumericError(LibreFaceError):
    exit_code = 4


class IOFailure(LibreFaceError):
    exit_code = 5


class BundleFormatError(IOFailure):
    pass


class BadMagicError(BundleFormatError):
    pass


class VersionMismatchError(BundleFormatError):
    pass


class TruncatedBlobError(BundleFormatError):
    def __init__(self, message, expected=None, actual=None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class MetadataMismatchError(BundleFormatError):
    pass


class PipelineIOError(IOFailure):
    def __init__(self, message, frame=None):
        super().__init__(message)
        self.frame = frame


class BenchmarkError(LibreFaceError):
    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index
