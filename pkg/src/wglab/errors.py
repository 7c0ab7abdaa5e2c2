class WGLabError(Exception):
    pass


class DomainError(WGLabError, ValueError):
    """Argument outside the domain of a function (e.g. j(t) for t <= 0)."""


class RangeError(WGLabError, ValueError):
    """Target value outside the range an inverse can reach."""


class NonMonotoneError(WGLabError, ValueError):
    """j is not increasing on the configured convexity window."""


class BracketError(WGLabError, RuntimeError):
    """A bisection bracket does not contain a root."""


class DegenerateModulusError(WGLabError, ValueError):
    """|u| too small on a contour for the winding number to be defined."""


class CoincidentPointsError(WGLabError, ValueError):
    pass


class ResolutionError(WGLabError, ValueError):
    """Grid too coarse for the requested construction."""


class PreconditionError(WGLabError, ValueError):
    """Hypotheses of a bound are violated, so the bound does not apply."""
