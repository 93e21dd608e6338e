"""Exception types raised across annealforge."""


class AnnealForgeError(Exception):
    """Base class for all package errors."""


class InvalidAssignment(AnnealForgeError, ValueError):
    pass


class TooLarge(AnnealForgeError, ValueError):
    pass


class InvalidDefectCount(AnnealForgeError, ValueError):
    pass


class InvalidWeight(AnnealForgeError, ValueError):
    pass


class InvalidScale(AnnealForgeError, ValueError):
    pass


class InvalidSchedule(AnnealForgeError, ValueError):
    """Raised for malformed schedules or schedule/model mismatches.

    ``violations`` carries the device-limit violations when the error comes
    from validating against a profile.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class InvalidAnnealTime(InvalidSchedule):
    pass


class MissingInitialState(AnnealForgeError, ValueError):
    pass


class ProblemFormatError(AnnealForgeError, ValueError):
    """Malformed problem, graph, or schedule file."""
