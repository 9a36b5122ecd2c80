"""Exception hierarchy shared across the package."""


class RoseStereoError(Exception):
    """Base class for all package errors."""


class DomainError(RoseStereoError, ValueError):
    """An argument lies outside the domain of the operation."""


class GenerationError(RoseStereoError):
    """Scene generation could not satisfy its constraints."""


class SplitError(RoseStereoError, ValueError):
    """Invalid dataset split request."""


class UnknownSplitError(RoseStereoError, KeyError):
    """Lookup of a split tag that does not exist in the manifest."""


class FormatError(RoseStereoError):
    """A file on disk is malformed.

    Carries the offending path and the byte offset where parsing stopped.
    """

    def __init__(self, path, offset: int, message: str):
        self.path = str(path)
        self.offset = offset
        self.message = message
        super().__init__(f"{self.path}: byte {offset}: {message}")


class MissingFileError(RoseStereoError, FileNotFoundError):
    """A file referenced by a manifest does not exist."""


class DegenerateMatchError(RoseStereoError):
    """Correlation is undefined because a patch has no energy/variance."""


class NoMatchError(RoseStereoError):
    """Template search produced no valid candidate."""


class UndefinedLossError(RoseStereoError, ValueError):
    """A loss was requested over an empty supervision mask."""
