"""Periodic 4-torus lattice fields and pointwise almost-Kahler algebra.

Conventions
-----------
Coordinates are x^0..x^3 with periods L_a (default 1.0); the lattice is the
uniform tensor grid with N_a points per period and periodic identification.
A degree-p form stores one real array per strictly increasing index tuple
(order as in :mod:`akgeo._tables`), shape ``(ncomp, N0, N1, N2, N3)``.

An almost-complex structure acts on vectors as ``(JX)^a = J^a_b X^b`` and on
1-forms by ``(J alpha)(X) = -alpha(JX)``; on p-forms by
``(J psi)(X_1, ..., X_p) = (-1)^p psi(JX_1, ..., JX_p)``.  The induced metric
is ``g(X, Y) = omega(X, JY)``; with the standard Darboux form and the standard
constant J this gives the identity metric, and ``g(omega, omega) = 2``
pointwise for every compatible triple.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from . import _tables as T
from .errors import (
    ClosednessError,
    CompatibilityError,
    DegreeError,
    GridMismatchError,
)

#: relative tolerance for pointwise algebraic invariants
ALGEBRAIC_TOL = 1e-10
#: |mean| <= MEAN_TOL * sup-norm for fields flagged zero-mean
MEAN_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice on the 4-torus.

    resolutions: points per period along each axis (even, >= 4).
    periods: period length along each axis.
    """

    resolutions: tuple[int, int, int, int]
    periods: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)

    def __post_init__(self):
        res = tuple(int(n) for n in self.resolutions)
        per = tuple(float(p) for p in self.periods)
        if len(res) != 4 or len(per) != 4:
            raise ValueError("GridSpec needs 4 resolutions and 4 periods")
        for n in res:
            if n < 4 or n % 2 != 0:
                raise ValueError(f"resolution {n} rejected: must be even and >= 4")
        for p in per:
            if p <= 0:
                raise ValueError("periods must be positive")
        object.__setattr__(self, "resolutions", res)
        object.__setattr__(self, "periods", per)

    @classmethod
    def cubic(cls, n: int, period: float = 1.0) -> "GridSpec":
        return cls((n, n, n, n), (period,) * 4)

    @property
    def shape(self):
        return self.resolutions

    @property
    def npoints(self) -> int:
        return int(np.prod(self.resolutions))

    @property
    def cell_volume(self) -> float:
        return float(np.prod([p / n for p, n in zip(self.periods, self.resolutions)]))

    @property
    def total_volume(self) -> float:
        return float(np.prod(self.periods))

    def axes(self):
        """1D coordinate arrays per axis."""
        return [
            np.arange(n) * (p / n)
            for n, p in zip(self.resolutions, self.periods)
        ]

    def meshgrid(self):
        """Coordinate arrays of shape ``(4, N0, N1, N2, N3)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"))


def _check_same_grid(*objs):
    grids = {o.grid for o in objs}
    if len(grids) > 1:
        raise GridMismatchError(f"operands on different grids: {grids}")


class ScalarField:
    """Real function sampled on the lattice."""

    def __init__(self, grid: GridSpec, values: np.ndarray, zero_mean: bool = False):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.values = values
        self.zero_mean = bool(zero_mean)
        if self.zero_mean:
            sup = float(np.max(np.abs(values))) if values.size else 0.0
            if abs(float(values.mean())) > MEAN_TOL * max(sup, 1.0):
                raise ValueError("field flagged zero-mean has a nonzero mean")

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    def mean(self) -> float:
        """Mean against the reference volume (constant weight on the lattice)."""
        return float(self.values.mean())

    def without_mean(self) -> "ScalarField":
        return ScalarField(self.grid, self.values - self.values.mean(), zero_mean=True)

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def __add__(self, other):
        _check_same_grid(self, other)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c):
        if isinstance(c, ScalarField):
            _check_same_grid(self, c)
            return ScalarField(self.grid, self.values * c.values)
        if isinstance(c, FormField):
            return c.__mul__(self)
        return ScalarField(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)


class FormField:
    """Degree-p differential form with components on increasing index tuples."""

    def __init__(self, grid: GridSpec, degree: int, comps: np.ndarray):
        if not 0 <= degree <= 4:
            raise DegreeError(f"degree {degree} out of range 0..4")
        comps = np.asarray(comps, dtype=np.float64)
        want = (T.NCOMP[degree],) + grid.shape
        if comps.shape != want:
            raise ValueError(f"component shape {comps.shape} != {want}")
        self.grid = grid
        self.degree = int(degree)
        self.comps = comps

    @classmethod
    def zeros(cls, grid: GridSpec, degree: int) -> "FormField":
        return cls(grid, degree, np.zeros((T.NCOMP[degree],) + grid.shape))

    @classmethod
    def from_scalar(cls, f: ScalarField) -> "FormField":
        return cls(f.grid, 0, f.values[None])

    def as_scalar(self) -> ScalarField:
        if self.degree != 0:
            raise DegreeError("only degree-0 forms convert to scalars")
        return ScalarField(self.grid, self.comps[0])

    def copy(self) -> "FormField":
        return FormField(self.grid, self.degree, self.comps.copy())

    def __add__(self, other):
        other = as_form(other)
        _check_same_grid(self, other)
        if self.degree != other.degree:
            raise DegreeError("cannot add forms of different degree")
        return FormField(self.grid, self.degree, self.comps + other.comps)

    def __sub__(self, other):
        other = as_form(other)
        _check_same_grid(self, other)
        if self.degree != other.degree:
            raise DegreeError("cannot subtract forms of different degree")
        return FormField(self.grid, self.degree, self.comps - other.comps)

    def __mul__(self, c):
        if isinstance(c, ScalarField):
            _check_same_grid(self, c)
            return FormField(self.grid, self.degree, self.comps * c.values)
        return FormField(self.grid, self.degree, self.comps * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return FormField(self.grid, self.degree, -self.comps)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.comps))) if self.comps.size else 0.0


def as_form(obj) -> FormField:
    """Accept a ScalarField wherever a degree-0 form is expected."""
    if isinstance(obj, ScalarField):
        return FormField.from_scalar(obj)
    return obj


class AlmostComplexField:
    """Pointwise endomorphism field J^a_b with J^2 = -Id."""

    def __init__(self, grid: GridSpec, j: np.ndarray):
        j = np.asarray(j, dtype=np.float64)
        if j.shape != (4, 4) + grid.shape:
            # allow a constant matrix, broadcast over the lattice
            if j.shape == (4, 4):
                j = np.broadcast_to(j[:, :, None, None, None, None], (4, 4) + grid.shape).copy()
            else:
                raise ValueError(f"J shape {j.shape} != (4,4)+{grid.shape}")
        self.grid = grid
        self.j = j

    def square_residual(self) -> float:
        jj = np.einsum("abX,bcX->acX", self.j.reshape(4, 4, -1), self.j.reshape(4, 4, -1))
        eye = np.eye(4)[:, :, None]
        return float(np.max(np.abs(jj + eye)))

    def validate_square(self, tol: float = ALGEBRAIC_TOL):
        res = self.square_residual()
        if res > tol:
            raise CompatibilityError(f"J^2 + Id residual {res:.3e} exceeds {tol:.1e}")


STANDARD_J_MATRIX = np.array(
    [
        [0.0, -1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
)

#: standard Darboux components: omega = dx^0^dx^1 + dx^2^dx^3
_STANDARD_OMEGA_COMPS = np.zeros(6)
_STANDARD_OMEGA_COMPS[T.POS[2][(0, 1)]] = 1.0
_STANDARD_OMEGA_COMPS[T.POS[2][(2, 3)]] = 1.0


def standard_omega(grid: GridSpec) -> FormField:
    comps = np.broadcast_to(
        _STANDARD_OMEGA_COMPS[:, None, None, None, None], (6,) + grid.shape
    ).copy()
    return FormField(grid, 2, comps)


def standard_j(grid: GridSpec) -> AlmostComplexField:
    return AlmostComplexField(grid, STANDARD_J_MATRIX)


def omega_matrix(omega: FormField) -> np.ndarray:
    """Antisymmetric matrix Omega[a,b] = omega(e_a, e_b), shape (4,4)+grid."""
    out = np.zeros((4, 4) + omega.grid.shape)
    for i, (a, b) in enumerate(T.INC[2]):
        out[a, b] = omega.comps[i]
        out[b, a] = -omega.comps[i]
    return out


class CompatibleTriple:
    """Symplectic form, compatible J and the induced metric, with cached algebra.

    Instances are immutable after construction; the lazy per-point tables
    (inverse metric, Gram matrices of the form bundles, J action matrices)
    are derived data and safe to share across threads once built.
    """

    def __init__(
        self,
        omega: FormField,
        J: AlmostComplexField,
        *,
        tol: float = ALGEBRAIC_TOL,
        require_closed: bool = True,
        _skip_checks: bool = False,
    ):
        _check_same_grid(omega, J)
        if omega.degree != 2:
            raise DegreeError("omega must be a 2-form")
        self.grid = omega.grid
        self.omega = omega
        self.J = J

        Om = omega_matrix(omega)
        jmat = J.j
        # g_{ab} = Omega_{ac} J^c_b
        g = np.einsum("acX,cbX->abX", Om.reshape(4, 4, -1), jmat.reshape(4, 4, -1))
        g = g.reshape((4, 4) + self.grid.shape)
        self.g = g
        self.d_omega_residual = None

        if not _skip_checks:
            J.validate_square(tol)
            # omega(JX, JY) = omega(X, Y)
            comp = np.einsum(
                "caX,cdX,dbX->abX",
                jmat.reshape(4, 4, -1),
                Om.reshape(4, 4, -1),
                jmat.reshape(4, 4, -1),
            ) - Om.reshape(4, 4, -1)
            scale = max(float(np.max(np.abs(Om))), 1.0)
            res = float(np.max(np.abs(comp))) / scale
            if res > tol:
                raise CompatibilityError(
                    f"omega(J.,J.) - omega residual {res:.3e} exceeds {tol:.1e}"
                )
            sym = float(np.max(np.abs(g - g.transpose(1, 0, 2, 3, 4, 5))))
            if sym > tol * max(float(np.max(np.abs(g))), 1.0):
                raise CompatibilityError(f"induced metric not symmetric ({sym:.3e})")
            eig = np.linalg.eigvalsh(np.moveaxis(g.reshape(4, 4, -1), -1, 0))
            if float(eig.min()) <= 0.0:
                raise CompatibilityError(
                    f"J not tame: min metric eigenvalue {float(eig.min()):.3e}"
                )
            # closedness is a spectral statement; import here to avoid a cycle
            from .spectral import exterior_d

            dres = exterior_d(omega).sup_norm()
            self.d_omega_residual = dres
            if require_closed and dres > 1e-8 * max(omega.sup_norm(), 1.0):
                raise ClosednessError(f"d(omega) residual {dres:.3e}")
            gww = pointwise_inner(omega, omega, self).values
            if float(np.max(np.abs(gww - 2.0))) > 1e-8:
                raise CompatibilityError("g(omega, omega) != 2 pointwise")

    # -- derived pointwise data (lazy, immutable once built) -----------------

    @cached_property
    def g_inv(self) -> np.ndarray:
        gi = np.linalg.inv(np.moveaxis(self.g.reshape(4, 4, -1), -1, 0))
        return np.ascontiguousarray(np.moveaxis(gi, 0, -1)).reshape((4, 4) + self.grid.shape)

    @cached_property
    def sqrt_det_g(self) -> np.ndarray:
        det = np.linalg.det(np.moveaxis(self.g.reshape(4, 4, -1), -1, 0))
        return np.sqrt(det).reshape(self.grid.shape)

    @cached_property
    def vol_coeff(self) -> np.ndarray:
        """Coefficient of the volume form omega^2/2 on dx^0123 (= sqrt det g)."""
        w = wedge(self.omega, self.omega)
        return 0.5 * w.comps[0]

    @cached_property
    def gram2(self) -> np.ndarray:
        """Gram matrix of the 2-form bundle: G2[A,B] = g(dx^A, dx^B)."""
        gi = self.g_inv
        out = np.empty((6, 6) + self.grid.shape)
        for A, (a, b) in enumerate(T.INC[2]):
            for B, (c, d) in enumerate(T.INC[2]):
                if B < A:
                    out[A, B] = out[B, A]
                    continue
                out[A, B] = gi[a, c] * gi[b, d] - gi[a, d] * gi[b, c]
        return out

    @cached_property
    def gram3(self) -> np.ndarray:
        """Gram matrix of the 3-form bundle (3x3 minors of the inverse metric)."""
        gi = self.g_inv
        out = np.empty((4, 4) + self.grid.shape)
        for A, ta in enumerate(T.INC[3]):
            for B, tb in enumerate(T.INC[3]):
                if B < A:
                    out[A, B] = out[B, A]
                    continue
                m = [[gi[i, j] for j in tb] for i in ta]
                out[A, B] = (
                    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
                )
        return out

    @cached_property
    def gram2_low(self) -> np.ndarray:
        """Inverse of gram2: the second compound matrix of g itself."""
        g = self.g
        out = np.empty((6, 6) + self.grid.shape)
        for A, (a, b) in enumerate(T.INC[2]):
            for B, (c, d) in enumerate(T.INC[2]):
                if B < A:
                    out[A, B] = out[B, A]
                    continue
                out[A, B] = g[a, c] * g[b, d] - g[a, d] * g[b, c]
        return out

    @cached_property
    def gram3_low(self) -> np.ndarray:
        """Inverse of gram3: 3x3 minors of g."""
        g = self.g
        out = np.empty((4, 4) + self.grid.shape)
        for A, ta in enumerate(T.INC[3]):
            for B, tb in enumerate(T.INC[3]):
                if B < A:
                    out[A, B] = out[B, A]
                    continue
                m = [[g[i, j] for j in tb] for i in ta]
                out[A, B] = (
                    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
                )
        return out

    @cached_property
    def j_mat2(self) -> np.ndarray:
        """J action on 2-form components: (J psi)_A = M2[B,A] psi_B."""
        j = self.J.j
        out = np.empty((6, 6) + self.grid.shape)
        for B, (c, d) in enumerate(T.INC[2]):
            for A, (a, b) in enumerate(T.INC[2]):
                out[B, A] = j[c, a] * j[d, b] - j[d, a] * j[c, b]
        return out

    @cached_property
    def j_mat3(self) -> np.ndarray:
        """J action on 3-form components: (J psi)_T = M3[S,T] psi_S."""
        j = self.J.j
        out = np.empty((4, 4) + self.grid.shape)
        for S, (d, e, f) in enumerate(T.INC[3]):
            for Ti, (a, b, c) in enumerate(T.INC[3]):
                det = (
                    j[d, a] * (j[e, b] * j[f, c] - j[f, b] * j[e, c])
                    - j[e, a] * (j[d, b] * j[f, c] - j[f, b] * j[d, c])
                    + j[f, a] * (j[d, b] * j[e, c] - j[e, b] * j[d, c])
                )
                out[S, Ti] = -det
        return out

    def drop_caches(self):
        """Release the large lazy tables (they rebuild on next use)."""
        for name in (
            "g_inv",
            "sqrt_det_g",
            "vol_coeff",
            "gram2",
            "gram3",
            "gram2_low",
            "gram3_low",
            "j_mat2",
            "j_mat3",
        ):
            self.__dict__.pop(name, None)


def build_torus_grid(
    spec: GridSpec,
    omega_choice: str = "standard_darboux",
    j_builder: Callable[[GridSpec], AlmostComplexField] | None = None,
    *,
    tol: float = ALGEBRAIC_TOL,
) -> CompatibleTriple:
    """Construct and validate a compatible triple on the flat 4-torus.

    ``j_builder`` maps the grid to an AlmostComplexField (defaults to the
    standard constant structure); the result is checked for J^2 = -Id,
    omega-compatibility, tameness and closedness of omega.
    """
    if omega_choice != "standard_darboux":
        raise ValueError(f"unknown omega_choice {omega_choice!r}")
    omega = standard_omega(spec)
    J = j_builder(spec) if j_builder is not None else standard_j(spec)
    if isinstance(J, np.ndarray):
        J = AlmostComplexField(spec, J)
    return CompatibleTriple(omega, J, tol=tol)


# -- pointwise operations ----------------------------------------------------


def j_act(psi, J: AlmostComplexField) -> FormField:
    """Action of J on a p-form: (J psi)(X_1..X_p) = (-1)^p psi(JX_1..JX_p)."""
    psi = as_form(psi)
    _check_same_grid(psi, J)
    p = psi.degree
    if p == 0 or p == 4:
        # degree 0 is the identity; degree 4 picks up det(J) = 1
        return psi.copy()
    j = J.j.reshape(4, 4, -1)
    comps = psi.comps.reshape(T.NCOMP[p], -1)
    if p == 1:
        out = -np.einsum("baX,bX->aX", j, comps)
    elif p == 2:
        out = np.empty_like(comps)
        for A, (a, b) in enumerate(T.INC[2]):
            acc = np.zeros(comps.shape[1])
            for B, (c, d) in enumerate(T.INC[2]):
                acc += comps[B] * (j[c, a] * j[d, b] - j[d, a] * j[c, b])
            out[A] = acc
    else:  # p == 3
        out = np.empty_like(comps)
        for Ti, (a, b, c) in enumerate(T.INC[3]):
            acc = np.zeros(comps.shape[1])
            for S, (d, e, f) in enumerate(T.INC[3]):
                det = (
                    j[d, a] * (j[e, b] * j[f, c] - j[f, b] * j[e, c])
                    - j[e, a] * (j[d, b] * j[f, c] - j[f, b] * j[d, c])
                    + j[f, a] * (j[d, b] * j[e, c] - j[e, b] * j[d, c])
                )
                acc += comps[S] * det
            out[Ti] = -acc
    return FormField(psi.grid, p, out.reshape((T.NCOMP[p],) + psi.grid.shape))


def j_act_cached(psi: FormField, triple: CompatibleTriple) -> FormField:
    """Same as :func:`j_act` but reuses the triple's cached action matrices."""
    p = psi.degree
    if p in (0, 4):
        return psi.copy()
    if p == 1:
        return j_act(psi, triple.J)
    mat = triple.j_mat2 if p == 2 else triple.j_mat3
    n = T.NCOMP[p]
    out = np.einsum(
        "BAX,BX->AX", mat.reshape(n, n, -1), psi.comps.reshape(n, -1)
    )
    return FormField(psi.grid, p, out.reshape((n,) + psi.grid.shape))


def wedge(a, b) -> FormField:
    """Graded-commutative wedge product."""
    a = as_form(a)
    b = as_form(b)
    _check_same_grid(a, b)
    p, q = a.degree, b.degree
    if p + q > 4:
        raise DegreeError(f"wedge degree {p}+{q} exceeds 4")
    out = np.zeros((T.NCOMP[p + q],) + a.grid.shape)
    for k, sign, i, j in T.WEDGE[(p, q)]:
        if sign >= 0:
            out[k] += a.comps[i] * b.comps[j]
        else:
            out[k] -= a.comps[i] * b.comps[j]
    return FormField(a.grid, p + q, out)


def pointwise_inner(a, b, triple: CompatibleTriple) -> ScalarField:
    """Pointwise metric pairing g(a, b) of two forms of equal degree."""
    a = as_form(a)
    b = as_form(b)
    _check_same_grid(a, b, triple.omega)
    if a.degree != b.degree:
        raise DegreeError("pointwise_inner needs equal degrees")
    p = a.degree
    ac = a.comps.reshape(T.NCOMP[p], -1)
    bc = b.comps.reshape(T.NCOMP[p], -1)
    if p == 0:
        vals = ac[0] * bc[0]
    elif p == 1:
        vals = np.einsum("abX,aX,bX->X", triple.g_inv.reshape(4, 4, -1), ac, bc)
    elif p == 2:
        vals = np.einsum("ABX,AX,BX->X", triple.gram2.reshape(6, 6, -1), ac, bc)
    elif p == 3:
        vals = np.einsum("ABX,AX,BX->X", triple.gram3.reshape(4, 4, -1), ac, bc)
    else:
        w = triple.sqrt_det_g.reshape(-1)
        vals = ac[0] * bc[0] / (w * w)
    return ScalarField(triple.grid, vals.reshape(triple.grid.shape))


def l2_inner(a, b, triple: CompatibleTriple) -> float:
    """L2 pairing: lattice quadrature of g(a,b) against the volume form omega^2/2."""
    dens = pointwise_inner(a, b, triple).values * triple.vol_coeff
    return float(dens.sum()) * triple.grid.cell_volume


def l2_norm(a, triple: CompatibleTriple) -> float:
    return float(np.sqrt(max(l2_inner(a, a, triple), 0.0)))


def type_decompose(psi: FormField, triple: CompatibleTriple):
    """Split a 2-form under J into (scalar part, anti-invariant, invariant traceless).

    psi = s * omega + psi_anti + psi_inv0 with s = g(psi, omega)/2, the
    anti-invariant part J-odd and the last part J-invariant and pointwise
    orthogonal to omega.
    """
    psi = as_form(psi)
    if psi.degree != 2:
        raise DegreeError("type_decompose acts on 2-forms")
    _check_same_grid(psi, triple.omega)
    jpsi = j_act_cached(psi, triple)
    anti = 0.5 * (psi - jpsi)
    s = 0.5 * pointwise_inner(psi, triple.omega, triple)
    inv0 = psi - anti - s * triple.omega
    return s, anti, inv0


# -- builders for compatible structures --------------------------------------


def _expm_sym(S: np.ndarray) -> np.ndarray:
    """Matrix exponential of a field of symmetric matrices, shape (4,4)+grid."""
    shp = S.shape[2:]
    M = np.moveaxis(S.reshape(4, 4, -1), -1, 0)
    w, v = np.linalg.eigh(M)
    out = np.einsum("Xab,Xb,Xcb->Xac", v, np.exp(w), v)
    return np.ascontiguousarray(np.moveaxis(out, 0, -1)).reshape((4, 4) + shp)


def retract_compatible(grid: GridSpec, A: np.ndarray) -> AlmostComplexField:
    """Retract a tangent at the standard structure onto the compatible set.

    ``A`` is an endomorphism field with A J0 + J0 A = 0 and A symmetric (the
    base metric is the identity); the retraction is J = J0 expm(-J0 A),
    which stays omega-compatible for all sizes of A.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.shape == (4, 4):
        A = np.broadcast_to(A[:, :, None, None, None, None], (4, 4) + grid.shape).copy()
    J0 = STANDARD_J_MATRIX
    anti = np.einsum("abX,bc->acX", A.reshape(4, 4, -1), J0) + np.einsum(
        "ab,bcX->acX", J0, A.reshape(4, 4, -1)
    )
    if float(np.max(np.abs(anti))) > 1e-12 * max(1.0, float(np.max(np.abs(A)))):
        raise CompatibilityError("tangent A must anticommute with the standard J")
    if float(np.max(np.abs(A - np.swapaxes(A, 0, 1)))) > 1e-12 * max(1.0, float(np.max(np.abs(A)))):
        raise CompatibilityError("tangent A must be symmetric in the base metric")
    S = -np.einsum("ab,bcX->acX", J0, A.reshape(4, 4, -1)).reshape(A.shape)
    E = _expm_sym(S)
    J = np.einsum("ab,bcX->acX", J0, E.reshape(4, 4, -1)).reshape(A.shape)
    return AlmostComplexField(grid, J)


def fiber_block_tangent(grid: GridSpec, s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    """Tangent field acting in the (x^2, x^3) plane with profile functions s1, s2.

    Returns A with A J0 + J0 A = 0 and A symmetric, supported on the second
    coordinate block.  With profiles depending only on (x^0, x^1) the
    resulting structures keep the product-block form that makes the metric
    harmonic pairings against omega constant.
    """
    A = np.zeros((4, 4) + grid.shape)
    # symmetric traceless 2x2 block anti-commutes with the 2D rotation J
    A[2, 2] = -s2
    A[3, 3] = s2
    A[2, 3] = s1
    A[3, 2] = s1
    return A


def block_modulated_j(
    grid: GridSpec, amplitude: float = 0.1, mode: tuple[int, int] = (1, 1)
) -> AlmostComplexField:
    """Non-integrable compatible structure, constant along the fiber plane.

    The modulation depends only on (x^0, x^1), so the harmonic 2-forms of the
    induced metric pair with omega through constant functions and the exact
    invariant deformations stay J-invariant.
    """
    x = grid.meshgrid()
    u, v = x[0] / grid.periods[0], x[1] / grid.periods[1]
    k0, k1 = mode
    s1 = amplitude * np.sin(2 * np.pi * k0 * u) * np.cos(2 * np.pi * k1 * v)
    s2 = amplitude * np.cos(2 * np.pi * k0 * u) * np.sin(2 * np.pi * k1 * v)
    return retract_compatible(grid, fiber_block_tangent(grid, s1, s2))


def generic_modulated_j(grid: GridSpec, amplitude: float = 0.1) -> AlmostComplexField:
    """Compatible structure modulated along all four axes (no product structure)."""
    x = grid.meshgrid()
    c = [x[a] / grid.periods[a] for a in range(4)]
    s1 = amplitude * np.sin(2 * np.pi * c[0]) * np.cos(2 * np.pi * c[2])
    s2 = amplitude * np.cos(2 * np.pi * (c[1] + c[3]))
    s3 = amplitude * np.sin(2 * np.pi * (c[2] - c[1]))
    A = fiber_block_tangent(grid, s1, s2)
    # couple the two coordinate planes: symmetric, J0-anticommuting
    A[0, 2] += s3
    A[2, 0] += s3
    A[1, 3] -= s3
    A[3, 1] -= s3
    return retract_compatible(grid, A)
