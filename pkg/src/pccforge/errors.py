"""Exception hierarchy.

Every error carries an ``exit_code`` so the command-line front end can map
error families onto stable process exit statuses.
"""


class PccError(Exception):
    exit_code = 1


class DataError(PccError):
    """Input data violates a format or integrity rule."""

    exit_code = 3


class IoFailure(PccError):
    """Wraps an ``OSError`` with the offending path."""

    exit_code = 4

    def __init__(self, path, cause):
        self.path = str(path)
        self.cause = cause
        super().__init__(f"{self.path}: {cause}")


class MalformedHeader(DataError):
    pass


class MalformedRecord(DataError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class EmptyCloud(DataError):
    pass


class SizeMismatch(DataError):
    pass


class TruncatedFile(DataError):
    pass


class UnknownClassId(DataError):
    pass


class MalformedCsv(DataError):
    pass


class ConflictingRule(DataError):
    def __init__(self, key, first_line, first_target, line, target):
        self.key = key
        self.lines = (first_line, line)
        super().__init__(
            f"key {key!r} maps to {first_target} on line {first_line} "
            f"but to {target} on line {line}"
        )


class InvalidTargetId(DataError):
    pass


class DuplicateSequence(DataError):
    pass


class MissingSequence(DataError):
    pass


class MissingPrediction(DataError):
    pass


class DegenerateFootprint(DataError):
    pass


class TooFewPoints(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ClassOutOfRange(DataError):
    pass


class NoDefinedClasses(DataError):
    pass
