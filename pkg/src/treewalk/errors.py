"""Exception hierarchy shared by every treewalk module."""


class TreeWalkError(Exception):
    """Base class for all package errors."""


class InvalidParameters(TreeWalkError, ValueError):
    pass


class InvalidEdge(TreeWalkError, ValueError):
    pass


class InvalidMove(TreeWalkError, ValueError):
    pass


class InvalidState(TreeWalkError, ValueError):
    pass


class NoPeakError(TreeWalkError):
    pass


class NumericalFailure(TreeWalkError, ArithmeticError):
    def __init__(self, message, dimension=None):
        super().__init__(message)
        self.dimension = dimension


class InsufficientData(TreeWalkError, ValueError):
    pass


class InvalidSequence(TreeWalkError, ValueError):
    pass


class ConfigError(TreeWalkError, ValueError):
    pass
