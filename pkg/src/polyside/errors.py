"""Exception hierarchy.

The CLI maps each family to an exit code: ``ConfigError`` -> 1,
``DataError`` -> 2, ``NumericDivergence`` -> 3.
"""


class PolysideError(Exception):
    pass


class ConfigError(PolysideError):
    pass


class DataError(PolysideError):
    pass


class KindConflict(DataError):
    pass


class SchemaViolation(DataError):
    pass


class ParseError(DataError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class Exhausted(DataError):
    """Not enough non-edges to draw the requested negatives."""


class MissingArtifact(DataError):
    def __init__(self, artifact, producer):
        self.artifact = str(artifact)
        self.producer = producer
        super().__init__(
            f"missing {self.artifact}; run `polyside {producer}` first"
        )


class UnknownPair(DataError, KeyError):
    pass


class MissingEmbedding(DataError, KeyError):
    pass


class IndexOutOfRange(DataError, IndexError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class Degenerate(ValueError):
    """A ranking metric is undefined because a class is absent."""


class NumericDivergence(PolysideError, ArithmeticError):
    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log if log is not None else []
