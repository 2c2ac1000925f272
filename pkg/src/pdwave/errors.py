"""Exception hierarchy.

Configuration and construction problems derive from ``ValueError``; failures
of a numerical routine derive from :class:`NumericalError` so the CLI can map
them to a distinct exit status.
"""


class InvalidProfile(ValueError):
    """A dissipation profile violates its construction rules."""


class UnsupportedFamily(ValueError):
    """The operation needs a derivative the profile family does not have."""


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class NumericalError(RuntimeError):
    """Base class for numerical failures surfaced by name."""


class IntegratorFailure(NumericalError):
    pass


class FrameSingular(NumericalError):
    pass


class DeterminantMismatch(NumericalError):
    pass


class DegenerateMonodromy(NumericalError):
    pass


class EigenvectorDegenerate(NumericalError):
    pass


class DenominatorSmall(NumericalError):
    pass


class NoiseDominated(NumericalError):
    pass


class SamplesOutsideI0(NumericalError):
    pass


class SearchExhausted(NumericalError):
    pass


class SpectralRadiusViolation(NumericalError):
    pass


class QuadratureNotConverged(NumericalError):
    pass


class InsufficientSamples(NumericalError):
    pass


class DegenerateDenominator(NumericalError):
    pass
