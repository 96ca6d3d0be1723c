"""Exception hierarchy shared by every module."""


class RaidError(Exception):
    """Base class for data and validation errors raised by this package."""


class InputShapeError(RaidError, ValueError):
    """An input does not match the width a network or detector expects."""


class FormatError(RaidError, ValueError):
    """A persisted artifact (network, dataset, detector) could not be parsed."""


class EmptyDataError(RaidError, ValueError):
    """An operation received no samples where at least one is required."""


class TrainingDivergedError(RaidError, ArithmeticError):
    """Training produced a non-finite loss."""


class NoAdversarialsError(RaidError):
    """No attack produced a single successful adversarial input."""
