"""Exception types raised by the rod simulator."""


class RodSimError(Exception):
    """Base class for all simulator errors."""


class NonSkewInput(RodSimError, ValueError):
    """Matrix passed to ``unskew`` has a significant symmetric part."""


class AngleAtPi(RodSimError, ValueError):
    """Rotation angle too close to pi for the logarithm to be unique."""


class TangentSingular(RodSimError, ValueError):
    """Inverse tangent operator evaluated at a multiple of 2*pi."""


class NewtonDiverged(RodSimError, RuntimeError):
    """Newton iteration hit its iteration cap without converging."""


class StepFailure(RodSimError, RuntimeError):
    """Adaptive step size controller underflowed."""


class ConfigError(RodSimError, ValueError):
    """Malformed or unknown experiment configuration."""
