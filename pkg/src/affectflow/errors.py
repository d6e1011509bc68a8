"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations


class AffectflowError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(AffectflowError):
    """Invalid configuration: missing files, out-of-range parameters."""


class DataError(AffectflowError):
    """Input data violates a format or ordering contract."""


class MalformedLine(DataError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class InvalidTimestamp(MalformedLine):
    pass


class EmptyFile(DataError):
    pass


class UnorderedInput(DataError):
    pass


class UnknownMessageId(DataError):
    pass


class UnknownCategory(DataError):
    pass


class DuplicateRating(DataError):
    pass


class CoverageMismatch(DataError):
    pass


class TooFewRaters(DataError):
    pass


class DegenerateDistribution(DataError):
    pass


class EmptyEpisode(DataError):
    pass


class OutOfOrderEvent(DataError):
    pass


class NoTemplates(ConfigError):
    pass
