"""Numerical and exact-algebraic toolkit for almost-Kahler geometry on 4-tori."""

from .errors import (
    AkgeoError,
    ClassMismatchError,
    ClosednessError,
    CompatibilityError,
    ConfigError,
    ConvergenceError,
    DegenerateFormError,
    DegreeError,
    GridMismatchError,
    InvarianceError,
    NewtonDivergenceError,
    NotExactError,
    NotHolomorphicError,
    NotInvariantError,
    ResolutionError,
    SpectrumError,
)
from .grid import (
    AlmostComplexField,
    CompatibleTriple,
    FormField,
    GridSpec,
    ScalarField,
    block_modulated_j,
    build_torus_grid,
    generic_modulated_j,
    j_act,
    l2_inner,
    l2_norm,
    pointwise_inner,
    standard_j,
    standard_omega,
    type_decompose,
    wedge,
)
from .spectral import (
    GreenSolveConfig,
    codifferential,
    contraction,
    exterior_d,
    green,
    harmonic_basis,
    harmonic_project,
    hodge_decompose,
    hodge_star,
    laplacian,
    lefschetz,
    set_fft_workers,
    twisted_codifferential,
    twisted_d,
)

__version__ = "0.1.0"
