"""Exception hierarchy shared across the solver."""


class PkamError(Exception):
    """Base class for all solver errors."""


class SchemaError(PkamError):
    """A data file does not conform to the torus JSON schema."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class DimensionMismatch(PkamError):
    """Array or file dimensions are inconsistent with the declared (d, n)."""


class ConfigError(PkamError):
    """A run configuration failed validation."""


class FrequencyRejected(PkamError):
    """The divisor scan found an (effectively) resonant lattice vector."""

    def __init__(self, vector, divisor):
        self.vector = vector
        self.divisor = divisor
        super().__init__(
            f"frequency rejected: lattice vector {list(vector)} gives divisor {divisor:.3e}"
        )


class NonzeroAverage(PkamError):
    """Right-hand side of a difference equation has a non-negligible average."""

    def __init__(self, average_norm, tolerance):
        self.average_norm = average_norm
        self.tolerance = tolerance
        super().__init__(
            f"difference equation needs zero average: |avg| = {average_norm:.3e} "
            f"> tolerance {tolerance:.3e}"
        )


class ResonantMode(PkamError):
    """A Fourier mode denominator fell below the double-precision floor."""

    def __init__(self, mode, divisor):
        self.mode = tuple(int(k) for k in mode)
        self.divisor = divisor
        super().__init__(f"resonant mode k={self.mode}: |1 - e^(2*pi*i k.w)| = {divisor:.3e}")


class DegenerateTorus(PkamError):
    """A pointwise frame inverse failed (condition number above threshold)."""

    def __init__(self, which, theta_index, cond):
        self.which = which
        self.theta_index = theta_index
        self.cond = cond
        super().__init__(
            f"degenerate torus: {which} has condition number {cond:.3e} at grid point {theta_index}"
        )


class RankDeficient(PkamError):
    """The averaged parameter-response system does not determine the correction."""

    def __init__(self, observed_rank, needed):
        self.observed_rank = observed_rank
        self.needed = needed
        super().__init__(f"parameter response rank {observed_rank} < unknowns {needed}")


class DomainEscape(PkamError):
    """The torus image left the declared domain of the map family."""


class StepRejected(PkamError):
    """Damped Newton step failed to decrease the error after all halvings."""


class NoConvergence(PkamError):
    """Iteration exhausted without reaching the target error.

    Carries the best iterate found so the caller can inspect or persist it.
    """

    def __init__(self, message, result=None):
        self.result = result
        super().__init__(message)


class NotAligned(PkamError):
    """Phase alignment stalled above tolerance: the tori are genuinely distinct."""

    def __init__(self, best_residual):
        self.best_residual = best_residual
        super().__init__(f"phase alignment stalled at residual {best_residual:.3e}")


class SingularResponse(PkamError):
    """The averaged phase-response Jacobian is rank deficient."""
