"""Exception types shared across the package."""


class EBPFError(Exception):
    """Base class for errors raised by this package."""


class SingularCovariance(EBPFError, ValueError):
    """A covariance that must be inverted is (numerically) singular."""


class NonDiagonalCovariance(EBPFError, ValueError):
    """An evaluator that needs independent axes received a correlated covariance."""


class EmptyParticleSet(EBPFError, ValueError):
    pass


class EmptyMask(EBPFError, ValueError):
    """A cross-entropy mask selected no time steps."""


class NotReached(EBPFError):
    """The cumulative mass of a finite pmf never reached the requested quantile."""


class ToleranceNotMet(EBPFError):
    pass


class ConfigError(EBPFError, ValueError):
    pass
