"""Exception hierarchy.

Scene/input problems derive from :class:`SceneError` (CLI exit code 2);
everything numerical derives from :class:`NumericalError` (exit code 3).
"""


class BilliardLabError(Exception):
    """Base class for all package errors."""


class SceneError(BilliardLabError):
    """Invalid scene description or scene invariant violation."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class IncomparableScenesError(SceneError):
    """Two scenes do not share the same chart and exterior body."""


class NumericalError(BilliardLabError):
    """Base class for numerical failures."""


class DegenerateMetricError(NumericalError):
    pass


class IllConditionedPlaneError(NumericalError):
    pass


class DomainExitError(NumericalError):
    """A trajectory left the chart domain; carries the last valid state."""

    def __init__(self, message, state=None, t=None):
        super().__init__(message)
        self.state = state
        self.t = t


class StepSizeError(NumericalError):
    pass


class DegenerateBoundaryError(NumericalError):
    pass


class NotOnBoundaryError(NumericalError):
    pass


class GrazingError(NumericalError):
    """Reflection requested for a grazing ray; classify it as a tangency."""


class FocalPointError(NumericalError):
    """Shape operator blew up along the flow."""

    def __init__(self, message, t_focal=None):
        super().__init__(message)
        self.t_focal = t_focal


class ConstructionFailedError(NumericalError):
    pass


class NotComparableError(NumericalError):
    pass


class PartialConstantsError(NumericalError):
    def __init__(self, message, missing=(), partial=None):
        super().__init__(f"{message}: missing {', '.join(missing)}")
        self.missing = tuple(missing)
        self.partial = partial


class ItineraryError(NumericalError):
    pass
