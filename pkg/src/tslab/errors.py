"""Exception hierarchy shared by all tslab modules."""


class TslabError(Exception):
    """Base class for every error raised by this package."""


class InvalidEigenvalue(TslabError, ValueError):
    pass


class InvalidRotation(TslabError, ValueError):
    pass


class SingularMatrix(TslabError, ValueError):
    pass


class DimensionMismatch(TslabError, ValueError):
    pass


class ActionOutOfSet(TslabError, ValueError):
    pass


class InvalidHorizon(TslabError, ValueError):
    pass


class InvalidParameter(TslabError, ValueError):
    pass


class HypothesisViolated(TslabError, ValueError):
    """The input does not satisfy the hypothesis of the inequality being evaluated."""


class PreconditionViolated(TslabError, ValueError):
    pass


class InvalidInit(TslabError, ValueError):
    pass


class SchemaError(TslabError, ValueError):
    pass


class ConfigError(TslabError, ValueError):
    pass
