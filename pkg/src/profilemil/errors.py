"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`ProfileMilError`.
The CLI maps :class:`DataError` to exit code 3, :class:`NumericalFailure`
to exit code 4 and :class:`ConfigError` to exit code 2.
"""


class ProfileMilError(Exception):
    pass


class ConfigError(ProfileMilError, ValueError):
    pass


class DataError(ProfileMilError, ValueError):
    pass


class NumericalFailure(ProfileMilError, ArithmeticError):
    pass


# core
class SplitTooSmall(DataError):
    pass


class InsufficientInstances(DataError):
    pass


class UnknownLabel(DataError, KeyError):
    pass


class DimensionMismatch(DataError):
    pass


class InvalidValue(DataError):
    pass


# ingest
class MalformedAnnotations(DataError):
    pass


class ManifestParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateProfile(DataError):
    pass


# features
class EmptyImage(DataError):
    pass


# classifiers / aggregate / eval
class MissingClass(DataError):
    pass


class MissingLabel(DataError):
    pass


class EmptyBag(DataError):
    pass


class EmptyEvaluation(DataError):
    pass


# synth
class InvalidSpec(ConfigError):
    pass
