"""Exception hierarchy for the engine.

Errors split into two families: configuration/usage errors (bad input that
should never reach the numerics) and numerical breakdowns (the geometry left
its domain of validity at some evaluation site). The CLI maps the latter to
exit code 3.
"""

from __future__ import annotations


class FinslerError(Exception):
    """Base class for every error raised by the package."""


class NumericalBreakdown(FinslerError):
    """The computation left the region where the structure is well defined."""


class OrderUnsupported(FinslerError):
    pass


class SingularSample(FinslerError):
    """Direction too close to the zero section."""


class NotStronglyConvex(NumericalBreakdown):
    """Fundamental tensor failed the positive-definiteness check."""


class DegenerateFlag(FinslerError):
    pass


class NoConvergence(NumericalBreakdown):
    pass


class StepFailure(NumericalBreakdown):
    """Unit-speed drift exceeded the integrator's breakdown threshold."""


class BadFrame(FinslerError):
    pass


class DegenerateCurve(FinslerError):
    pass


class CriticalPoint(FinslerError):
    """Derivative vanishes where a Schwarzian is requested."""


class CriticalVelocity(NumericalBreakdown):
    pass


class PoleOnGrid(FinslerError):
    pass


class ConfigError(FinslerError):
    """Experiment configuration failed validation."""
