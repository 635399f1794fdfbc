"""Exception types raised across the package."""


class CoagError(Exception):
    """Base class for all package errors."""


class ConfigError(CoagError):
    pass


class StateError(CoagError, ValueError):
    """Bad state vector: wrong shape or negative concentrations."""


class NoBistabilityError(CoagError):
    """Raised when an operation needs a bistable parameter set."""


class SimulationBlowUp(CoagError):
    def __init__(self, message, time=None, snapshot=None):
        super().__init__(message)
        self.time = time
        self.snapshot = snapshot


class NoFrontError(CoagError):
    def __init__(self, message, crossings=0):
        super().__init__(message)
        self.crossings = crossings


class NotConvergedError(CoagError):
    pass


class UnusableProfileError(CoagError):
    pass


class NoUpperStateError(CoagError):
    """No positive upper state w* for the scalar nonlinearity."""


class InvalidKinkError(CoagError):
    def __init__(self, message, workpad=None):
        super().__init__(message)
        self.workpad = workpad
