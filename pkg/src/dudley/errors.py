"""Exception hierarchy.

Numerical guards (chart overflow, non-convergent logarithm, isometry drift)
derive from :class:`NumericalGuard`; the CLI maps those to exit code 3 and
every other :class:`DudleyError` to exit code 2.
"""


class DudleyError(Exception):
    pass


class InvalidParams(DudleyError, ValueError):
    pass


class NumericalGuard(DudleyError):
    pass


class NonConvergent(NumericalGuard):
    """Matrix logarithm did not converge: the point lies outside the chart."""


class ChartOverflow(NumericalGuard):
    """A simulated path left the logarithmic chart before exiting the domain."""


class IsometryDrift(NumericalGuard):
    """Accumulated rounding broke the Lorentz invariants beyond tolerance."""


class ZeroElement(DudleyError, ValueError):
    pass


class DegeneratePair(DudleyError, ValueError):
    pass


class SingularPair(DudleyError, ValueError):
    pass


class UnsupportedOrder(DudleyError, ValueError):
    pass


class InsufficientPaths(DudleyError, ValueError):
    pass


class InsufficientCloud(DudleyError, ValueError):
    pass


class ConfigError(DudleyError, ValueError):
    pass
