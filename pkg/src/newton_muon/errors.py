"""Exception types raised by the numerical kernels and harness."""


class NotPositiveDefinite(Exception):
    """Cholesky factorization hit a nonpositive pivot."""


class NotPSD(Exception):
    """Symmetric matrix has an eigenvalue too negative to be rounding noise."""


class ZeroMatrix(Exception):
    """Operation requires a nonzero matrix."""


class MarginTooSmall(Exception):
    """No stored polynomial plan is certified for the available spectral margin."""


class PlanViolation(Exception):
    """A polynomial plan's chained residual bound exceeds its certified value."""


class DegenerateDirection(Exception):
    """Score denominator vanished; the direction carries no curvature mass."""


class FixedPointDiverged(Exception):
    """Stieltjes fixed-point iteration failed to converge within the cap."""


class DecompositionViolated(Exception):
    """Trajectory left the invariant subspace of the spike decomposition."""


class TrainingDiverged(Exception):
    """Training loss exceeded the divergence-abort threshold."""


class ConfigError(Exception):
    """Malformed or unknown configuration input."""
