"""Exception types shared across the package."""


class AkgeoError(Exception):
    """Base class for all package errors."""


class GridMismatchError(AkgeoError):
    """Operands live on different grids."""


class DegreeError(AkgeoError):
    """Operation not defined for the given form degree."""


class CompatibilityError(AkgeoError):
    """Almost-complex structure fails J^2 = -Id, invariance or tameness."""


class ClosednessError(AkgeoError):
    """Symplectic form has a d-residual above tolerance."""


class ResolutionError(AkgeoError):
    """Spectral content too close to the grid Nyquist band for safe derivatives."""


class ConvergenceError(AkgeoError):
    """Krylov solve did not reach the requested tolerance.

    Carries the final relative residual and the iteration count.
    """

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SpectrumError(AkgeoError):
    """Harmonic-space construction failed (metric too rough for the resolution)."""


class NotInvariantError(AkgeoError):
    """Input form is not J-invariant within tolerance."""


class NotExactError(AkgeoError):
    """Input form is not d-exact within tolerance (has a harmonic part or is not closed)."""


class ClassMismatchError(AkgeoError):
    """Two closed forms do not share a de Rham class within tolerance."""


class NotHolomorphicError(AkgeoError):
    """Vector field is not an infinitesimal automorphism of J within tolerance."""


class DegenerateFormError(AkgeoError):
    """Deformed 2-form lost pointwise nondegeneracy / positivity."""


class InvarianceError(AkgeoError):
    """Deformation 2-form has a J-anti-invariant part above tolerance."""


class NewtonDivergenceError(AkgeoError):
    """Newton residual grew over consecutive iterations."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ConfigError(AkgeoError):
    """Invalid, unknown or missing configuration entry."""
