"""Exception hierarchy shared by every devforge stage."""


class DevforgeError(Exception):
    """Base class for all errors raised by devforge."""


# acquisition
class AuthError(DevforgeError):
    pass


class RateLimited(DevforgeError):
    def __init__(self, message="rate limited", retry_after=None):
        super().__init__(message)
        self.retry_after = retry_after


class NotFound(DevforgeError):
    pass


class InvalidRecord(DevforgeError, ValueError):
    """An upstream payload or record violates its type invariants."""


# imports
class PatternTimeout(DevforgeError):
    pass


class MalformedNotebook(DevforgeError, ValueError):
    pass


class UnsupportedLanguage(DevforgeError, ValueError):
    pass


# paragraph vectors
class EmptyVocabulary(DevforgeError, ValueError):
    pass


class DuplicateTag(DevforgeError, ValueError):
    pass


class OOVOnly(DevforgeError, ValueError):
    """Every token of a document is outside the model vocabulary."""


class FormatVersionMismatch(DevforgeError):
    pass


class CorruptModel(DevforgeError):
    pass


# pipelines / eval
class MissingSource(DevforgeError, KeyError):
    def __init__(self, missing):
        self.missing = tuple(missing)
        super().__init__(f"missing source vector(s): {', '.join(self.missing)}")

    def __str__(self):
        return self.args[0]


class DimensionMismatch(DevforgeError, ValueError):
    pass


class TooFewPerClass(DevforgeError, ValueError):
    pass


class SingleClass(DevforgeError, ValueError):
    pass


class NonFiniteFeature(DevforgeError, ValueError):
    pass


class UnknownLabel(DevforgeError, ValueError):
    pass


class ZeroVector(DevforgeError, ValueError):
    pass


# configuration
class MalformedConfig(DevforgeError, ValueError):
    pass


class UnknownKey(MalformedConfig):
    pass


class RankDeficient(UserWarning):
    """PCA was asked for more components than the data has variance for."""
