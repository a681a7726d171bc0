"""Exception types raised across the toolkit."""


class DrsmpcError(Exception):
    """Base class for all errors raised by drsmpc."""


class ConcentrationOutOfRange(DrsmpcError):
    """A solid concentration left [0, c_s_max] beyond solver tolerance.

    Signals that the applied input drove the plant outside its validity
    envelope; the offending step is not applied.
    """


class NonFiniteState(DrsmpcError):
    """A plant state contains NaN or Inf."""


class NonFiniteOutput(DrsmpcError):
    """A plant output could not be evaluated (e.g. zero exchange current
    with nonzero flux)."""


class WindowTooLong(DrsmpcError):
    """An episode is shorter than the requested sample window."""


class DegenerateData(DrsmpcError):
    """Data has zero variance; no principal directions exist."""


class DimensionMismatch(DrsmpcError):
    """An array does not have the expected shape."""


class NonFiniteLoss(DrsmpcError):
    """Training loss became NaN/Inf."""


class SingularCovariance(DrsmpcError):
    """Residual covariance is not positive definite even after ridging."""


class OverflowGuard(DrsmpcError):
    """No usable evaluation point for the concentration-constant program."""


class InfeasibleAtSigmaMax(DrsmpcError):
    """The worst-case probability still exceeds the risk level at the
    largest allowed hypercube half-width; raise sigma_max or loosen the
    radius/risk settings."""


class NonFiniteGradient(DrsmpcError):
    """Solver gradient evaluation produced NaN/Inf."""


class ConfigError(DrsmpcError):
    """An experiment or plant configuration is invalid."""


class MissingArtifact(DrsmpcError):
    """A pipeline stage input artifact does not exist."""


class StaleArtifact(DrsmpcError):
    """A pipeline stage input artifact no longer matches the hash recorded
    when it was produced."""
