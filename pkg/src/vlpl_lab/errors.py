"""Exception hierarchy shared by all vlpl_lab modules."""


class VlplError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VlplError):
    """Experiment configuration is malformed or inconsistent."""


# embedding storage

class MalformedHeader(VlplError):
    pass


class DimensionMismatch(VlplError):
    pass


class NonFiniteValue(VlplError):
    pass


class ChecksumMismatch(VlplError):
    pass


class IoFailure(VlplError):
    pass


class ZeroNormRow(VlplError):
    pass


class InvalidSpec(VlplError):
    pass


# dataset simulation

class NoPositiveRow(VlplError):
    pass


class InvalidFraction(VlplError):
    pass


# pseudo-labeling

class NonPositiveTemperature(VlplError):
    pass


class ConflictingShape(VlplError):
    pass


class ShapeMismatch(VlplError):
    pass


# losses

class NonFiniteScore(VlplError):
    pass


class UnexpectedState(VlplError):
    pass


# probe training

class InvalidShape(VlplError):
    pass


class NonFiniteGradient(VlplError):
    pass


class EmptyDataset(VlplError):
    pass


class DivergenceDetected(VlplError):
    pass


# metrics

class NoPositives(VlplError):
    pass


class NoEvaluableClass(VlplError):
    pass


# sweeps

class EmptyResult(VlplError):
    pass
