"""Spectral exterior calculus and Green operators on the periodic lattice.

The exterior derivative is exact Fourier differentiation followed by
antisymmetrized assembly; the codifferential is -*d* (the dimension is even).
The twisted operators conjugate by the pointwise J action with the
degree-dependent sign, and the two Laplacians are inverted by conjugate
gradients preconditioned mode-wise by the flat-torus Laplacian.

Harmonic bases are built one cohomology class at a time: each constant
representative (J-conjugated for the twisted complex) is corrected by a
single co-exact Krylov solve, which lands on the harmonic representative of
its class with residual at the solver tolerance.  The de Rham classes of the
constant forms are metric-independent, so the basis always has dimension
b_p in (1, 4, 6, 4, 1).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import _tables as T
from .errors import ConvergenceError, DegreeError, SpectrumError
from .grid import (
    CompatibleTriple,
    FormField,
    GridSpec,
    ScalarField,
    as_form,
    j_act_cached,
    l2_inner,
    pointwise_inner,
    wedge,
)

_fft_workers = 1


def set_fft_workers(n: int):
    """Cap the FFT worker pool (1 disables threading)."""
    global _fft_workers
    _fft_workers = max(1, int(n))


def _rfftn(arr):
    return sfft.rfftn(arr, axes=(-4, -3, -2, -1), workers=_fft_workers)


def _irfftn(arr, shape):
    return sfft.irfftn(arr, s=shape, axes=(-4, -3, -2, -1), workers=_fft_workers)


_KVEC_CACHE: dict[GridSpec, list[np.ndarray]] = {}
_kvec_lock = threading.Lock()


def _kvecs(grid: GridSpec):
    """Angular wavenumber arrays broadcastable over the rfft layout.

    The Nyquist bin of each (even) axis is set to zero: the sawtooth mode has
    no well-defined lattice derivative, and killing it keeps the spectral
    derivative exactly skew-adjoint on the whole discrete space.
    """
    with _kvec_lock:
        if grid not in _KVEC_CACHE:
            ks = []
            for a in range(4):
                n, L = grid.resolutions[a], grid.periods[a]
                if a < 3:
                    k = 2 * np.pi * np.fft.fftfreq(n, d=L / n)
                else:
                    k = 2 * np.pi * np.fft.rfftfreq(n, d=L / n)
                k[n // 2] = 0.0
                shape = [1, 1, 1, 1]
                shape[a] = len(k)
                ks.append(k.reshape(shape))
            _KVEC_CACHE[grid] = ks
        return _KVEC_CACHE[grid]


def _dealias(form: FormField) -> FormField:
    """Project off the per-axis Nyquist bins (the solver's function space)."""
    n = form.grid.resolutions
    hat = _rfftn(form.comps)
    hat[..., n[0] // 2, :, :, :] = 0.0
    hat[..., :, n[1] // 2, :, :] = 0.0
    hat[..., :, :, n[2] // 2, :] = 0.0
    hat[..., :, :, :, n[3] // 2] = 0.0
    return FormField(form.grid, form.degree, _irfftn(hat, form.grid.shape))


def _flat_symbol(grid: GridSpec):
    ks = _kvecs(grid)
    return ks[0] ** 2 + ks[1] ** 2 + ks[2] ** 2 + ks[3] ** 2


# -- first derivatives ---------------------------------------------------------


def exterior_d(psi) -> FormField:
    """Exterior derivative by spectral differentiation (degree <= 3)."""
    psi = as_form(psi)
    p = psi.degree
    if p >= 4:
        raise DegreeError("d is not defined on 4-forms here")
    grid = psi.grid
    ks = _kvecs(grid)
    hat = _rfftn(psi.comps)
    out_hat = np.zeros((T.NCOMP[p + 1],) + hat.shape[1:], dtype=np.complex128)
    for k_out, terms in enumerate(T.D_TABLE[p]):
        acc = out_hat[k_out]
        for sign, axis, k_in in terms:
            if sign >= 0:
                acc += (1j * ks[axis]) * hat[k_in]
            else:
                acc -= (1j * ks[axis]) * hat[k_in]
    return FormField(grid, p + 1, _irfftn(out_hat, grid.shape))


def partial_derivatives(grid: GridSpec, stack: np.ndarray) -> np.ndarray:
    """All four partials of a stacked component array, shape (4,) + stack.shape."""
    ks = _kvecs(grid)
    hat = _rfftn(stack)
    outs = np.empty((4,) + stack.shape)
    for a in range(4):
        outs[a] = _irfftn(1j * ks[a] * hat, grid.shape)
    return outs


def top_band_energy_fraction(grid: GridSpec, stack: np.ndarray) -> float:
    """Spectral energy fraction in the top third of modes along any axis."""
    hat = _rfftn(stack)
    power = np.abs(hat) ** 2
    # rfft halves the last axis; the factor-2 weight of interior modes does
    # not matter for an order-of-magnitude aliasing gate
    masks = []
    for a in range(4):
        n = grid.resolutions[a]
        if a < 3:
            m = np.abs(np.fft.fftfreq(n) * n)
        else:
            m = np.fft.rfftfreq(n) * n
        shape = [1, 1, 1, 1]
        shape[a] = len(m)
        masks.append((m > n // 3).reshape(shape))
    top = masks[0] | masks[1] | masks[2] | masks[3]
    total = float(power.sum())
    if total == 0.0:
        return 0.0
    return float((power * top).sum()) / total


# -- pointwise star and friends ------------------------------------------------


def hodge_star(psi, triple: CompatibleTriple) -> FormField:
    """Riemannian Hodge operator defined by a ^ *b = g(a,b) omega^2/2."""
    psi = as_form(psi)
    p = psi.degree
    grid = psi.grid
    w = triple.sqrt_det_g
    if p == 0:
        return FormField(grid, 4, (psi.comps[0] * w)[None])
    if p == 4:
        return FormField(grid, 0, (psi.comps[0] / w)[None])
    flat = psi.comps.reshape(T.NCOMP[p], -1)
    if p == 1:
        raised = np.einsum("abX,bX->aX", triple.g_inv.reshape(4, 4, -1), flat)
    elif p == 2:
        raised = np.einsum("ABX,BX->AX", triple.gram2.reshape(6, 6, -1), flat)
    else:
        raised = np.einsum("ABX,BX->AX", triple.gram3.reshape(4, 4, -1), flat)
    out = np.empty((T.NCOMP[4 - p],) + grid.shape)
    wf = w.reshape(-1)
    for i in range(T.NCOMP[p]):
        jc, sign = T.COMPL[p][i]
        out[jc] = (sign * wf * raised[i]).reshape(grid.shape)
    return FormField(grid, 4 - p, out)


def _d_transpose(beta: FormField) -> FormField:
    """Plain lattice transpose of the spectral d (adjoint of each d_a is -d_a)."""
    p_out = beta.degree - 1
    grid = beta.grid
    ks = _kvecs(grid)
    hat = _rfftn(beta.comps)
    out_hat = np.zeros((T.NCOMP[p_out],) + hat.shape[1:], dtype=np.complex128)
    for k_in, terms in enumerate(T.D_TABLE[p_out]):
        for sign, axis, i_out in terms:
            if sign >= 0:
                out_hat[i_out] -= (1j * ks[axis]) * hat[k_in]
            else:
                out_hat[i_out] += (1j * ks[axis]) * hat[k_in]
    return FormField(grid, p_out, _irfftn(out_hat, grid.shape))


def _weight_apply(psi: FormField, triple: CompatibleTriple) -> FormField:
    """Multiply by the pointwise L2 weight: volume coefficient times the Gram matrix."""
    p = psi.degree
    w = triple.vol_coeff
    flat = psi.comps.reshape(T.NCOMP[p], -1)
    if p == 0:
        out = flat * w.reshape(-1)
    elif p == 1:
        out = np.einsum("abX,bX->aX", triple.g_inv.reshape(4, 4, -1), flat) * w.reshape(-1)
    elif p == 2:
        out = np.einsum("ABX,BX->AX", triple.gram2.reshape(6, 6, -1), flat) * w.reshape(-1)
    elif p == 3:
        out = np.einsum("ABX,BX->AX", triple.gram3.reshape(4, 4, -1), flat) * w.reshape(-1)
    else:
        sd = triple.sqrt_det_g.reshape(-1)
        out = flat * (w.reshape(-1) / sd**2)
    return FormField(psi.grid, p, out.reshape(psi.comps.shape))


def _weight_solve(psi: FormField, triple: CompatibleTriple) -> FormField:
    """Inverse of :func:`_weight_apply` (compound matrices of g invert the Grams)."""
    p = psi.degree
    w = triple.vol_coeff
    flat = psi.comps.reshape(T.NCOMP[p], -1)
    if p == 0:
        out = flat / w.reshape(-1)
    elif p == 1:
        out = np.einsum("abX,bX->aX", triple.g.reshape(4, 4, -1), flat) / w.reshape(-1)
    elif p == 2:
        out = np.einsum("ABX,BX->AX", triple.gram2_low.reshape(6, 6, -1), flat) / w.reshape(-1)
    elif p == 3:
        out = np.einsum("ABX,BX->AX", triple.gram3_low.reshape(4, 4, -1), flat) / w.reshape(-1)
    else:
        sd = triple.sqrt_det_g.reshape(-1)
        out = flat * (sd**2 / w.reshape(-1))
    return FormField(psi.grid, p, out.reshape(psi.comps.shape))


def codifferential(psi, triple: CompatibleTriple) -> FormField:
    """Codifferential: the exact lattice adjoint of d in the L2(g) pairing.

    Agrees with -*d* to spectral accuracy; the adjoint form keeps
    <d a, b> = <a, delta b> and delta^2 = 0 exact on the lattice, which the
    Krylov solves rely on.
    """
    psi = as_form(psi)
    if psi.degree < 1:
        raise DegreeError("codifferential needs degree >= 1")
    return _weight_solve(_d_transpose(_weight_apply(psi, triple)), triple)


def codifferential_star(psi, triple: CompatibleTriple) -> FormField:
    """Codifferential via the even-dimension formula -*d* (cross-check route)."""
    psi = as_form(psi)
    if psi.degree < 1:
        raise DegreeError("codifferential needs degree >= 1")
    return -hodge_star(exterior_d(hodge_star(psi, triple)), triple)


def twisted_d(psi, triple: CompatibleTriple) -> FormField:
    """Twisted differential (-1)^p J d J on p-forms."""
    psi = as_form(psi)
    p = psi.degree
    if p >= 4:
        raise DegreeError("twisted differential is not defined on 4-forms")
    res = j_act_cached(exterior_d(j_act_cached(psi, triple)), triple)
    return res if p % 2 == 0 else -res


def twisted_codifferential(psi, triple: CompatibleTriple) -> FormField:
    """Twisted codifferential (-1)^p J delta J (symplectic adjoint of d)."""
    psi = as_form(psi)
    p = psi.degree
    if p < 1:
        raise DegreeError("twisted codifferential needs degree >= 1")
    res = j_act_cached(codifferential(j_act_cached(psi, triple), triple), triple)
    return res if p % 2 == 0 else -res


def lefschetz(psi, triple: CompatibleTriple) -> FormField:
    """Wedge with omega (degree <= 2)."""
    psi = as_form(psi)
    if psi.degree > 2:
        raise DegreeError("lefschetz needs degree <= 2")
    return wedge(triple.omega, psi)


def contraction(psi, triple: CompatibleTriple) -> FormField:
    """Adjoint of the omega wedge on degree >= 2, via (-1)^p * L *."""
    psi = as_form(psi)
    p = psi.degree
    if p < 2:
        raise DegreeError("contraction needs degree >= 2")
    res = hodge_star(wedge(triple.omega, hodge_star(psi, triple)), triple)
    return res if p % 2 == 0 else -res


def laplacian(psi, triple: CompatibleTriple, kind: str = "metric") -> FormField:
    """Hodge Laplacian d delta + delta d, or its twisted version."""
    psi = as_form(psi)
    p = psi.degree
    if kind == "metric":
        dd = exterior_d
        cd = lambda x: codifferential(x, triple)  # noqa: E731
    elif kind == "twisted":
        dd = lambda x: twisted_d(x, triple)  # noqa: E731
        cd = lambda x: twisted_codifferential(x, triple)  # noqa: E731
    else:
        raise ValueError(f"unknown laplacian kind {kind!r}")
    out = None
    if p <= 3:
        out = cd(dd(psi))
    if p >= 1:
        t = dd(cd(psi))
        out = t if out is None else out + t
    return out


# -- Green operators and harmonic spaces ----------------------------------------


@dataclass
class GreenSolveConfig:
    """Krylov settings for the Green solves."""

    rtol: float = 1e-11
    max_iter: int = 10000
    preconditioner: str = "flat_laplacian"

    def __post_init__(self):
        if not 0.0 < self.rtol < 1.0:
            raise ValueError("rtol must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.preconditioner not in ("flat_laplacian", "none"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")


BETTI = {0: 1, 1: 4, 2: 6, 3: 4, 4: 1}


class SpectralCache:
    """Per-triple spectral state: flat symbols and the harmonic bases.

    Construction is cheap; harmonic bases build lazily per (kind, degree) and
    are immutable afterwards.
    """

    def __init__(self, triple: CompatibleTriple):
        self.triple = triple
        self.grid = triple.grid
        self.flat_symbol = _flat_symbol(self.grid)
        g = triple.g.reshape(4, 4, -1)
        gm = g.mean(axis=-1)
        self.const_metric = float(np.max(np.abs(g - gm[:, :, None]))) < 1e-13 * max(
            1.0, float(np.max(np.abs(gm)))
        )
        self.const_g_inv = np.linalg.inv(gm) if self.const_metric else None
        self._bases: dict = {}
        self._lock = threading.Lock()

    def _const_symbol(self):
        ks = _kvecs(self.grid)
        gi = self.const_g_inv
        sym = np.zeros(np.broadcast_shapes(*[k.shape for k in ks]))
        for a in range(4):
            for b in range(4):
                sym = sym + gi[a, b] * ks[a] * ks[b]
        return sym

    def harmonic_basis(
        self,
        degree: int,
        kind: str = "metric",
        cfg: GreenSolveConfig | None = None,
        warm_alphas=None,
    ):
        """Orthonormal basis of the requested harmonic space (dimension b_p)."""
        key = (kind, degree)
        with self._lock:
            if key in self._bases:
                return self._bases[key][0]
        basis, alphas, residual = self._build_basis(degree, kind, cfg, warm_alphas)
        with self._lock:
            self._bases.setdefault(key, (basis, alphas, residual))
            return self._bases[key][0]

    def basis_residual(self, degree: int, kind: str = "metric") -> float:
        self.harmonic_basis(degree, kind)
        return self._bases[(kind, degree)][2]

    def basis_alphas(self, degree: int, kind: str = "metric"):
        self.harmonic_basis(degree, kind)
        return self._bases[(kind, degree)][1]

    def _build_basis(self, degree, kind, cfg, warm_alphas):
        triple = self.triple
        cfg = cfg or GreenSolveConfig()
        if degree == 0:
            c = ScalarField(self.grid, np.ones(self.grid.shape))
            h = as_form(c)
            h = (1.0 / l2_inner(h, h, triple) ** 0.5) * h
            return [h], [], 0.0
        if degree == 4:
            h = hodge_star(as_form(ScalarField(self.grid, np.ones(self.grid.shape))), triple)
            h = (1.0 / l2_inner(h, h, triple) ** 0.5) * h
            return [h], [], 0.0
        seeds = []
        for i in range(T.NCOMP[degree]):
            comps = np.zeros((T.NCOMP[degree],) + self.grid.shape)
            comps[i] = 1.0
            chi = FormField(self.grid, degree, comps)
            if kind == "twisted":
                # J^{-1} chi is d^c-closed exactly when chi is constant
                chi = j_act_cached(chi, triple)
                if degree % 2 == 1:
                    chi = -chi
            seeds.append(chi)
        if kind == "metric":
            dd = exterior_d
            cd = lambda x: codifferential(x, triple)  # noqa: E731
        else:
            dd = lambda x: twisted_d(x, triple)  # noqa: E731
            cd = lambda x: twisted_codifferential(x, triple)  # noqa: E731
        reps, alphas = [], []
        for i, chi in enumerate(seeds):
            rhs = cd(chi)
            x0 = warm_alphas[i] if warm_alphas is not None else None
            try:
                alpha, _ = _pcg(rhs, triple, kind, cfg, basis=None, x0=x0, cache=self)
            except ConvergenceError as exc:
                raise SpectrumError(
                    f"harmonic representative solve failed for degree {degree} ({kind}): {exc}"
                ) from exc
            reps.append(chi - dd(alpha))
            alphas.append(alpha)
        basis = _orthonormalize(reps, triple)
        lap = lambda x: laplacian(x, triple, kind)  # noqa: E731
        residual = 0.0
        for h in basis:
            r = l2_inner(lap(h), lap(h), triple) ** 0.5
            residual = max(residual, r)
        # the residual is dominated by how well the lattice resolves the
        # metric (it decays spectrally with resolution); well beyond 1e-4 the
        # harmonic space is not meaningful at this resolution
        if residual > 1e-4:
            raise SpectrumError(
                f"harmonic basis residual {residual:.3e}: metric too rough for "
                f"resolution (degree {degree}, {kind})"
            )
        return basis, alphas, residual

    def drop(self):
        with self._lock:
            self._bases.clear()


_cache_lock = threading.Lock()


def get_cache(triple: CompatibleTriple) -> SpectralCache:
    cache = getattr(triple, "_spectral_cache", None)
    if cache is None:
        with _cache_lock:
            cache = getattr(triple, "_spectral_cache", None)
            if cache is None:
                cache = SpectralCache(triple)
                triple._spectral_cache = cache
    return cache


def _orthonormalize(forms, triple):
    """Modified Gram-Schmidt in the L2 pairing (deterministic order)."""
    out = []
    for f in forms:
        v = f.copy()
        for u in out:
            v = v - l2_inner(v, u, triple) * u
        n = l2_inner(v, v, triple) ** 0.5
        if n < 1e-8:
            raise SpectrumError("harmonic representatives became linearly dependent")
        out.append((1.0 / n) * v)
    return out


def _flat_precondition(cache: SpectralCache, form: FormField) -> FormField:
    hat = _rfftn(form.comps)
    sym = cache.flat_symbol.copy()
    zero = sym == 0.0
    sym[zero] = 4 * np.pi**2
    return FormField(form.grid, form.degree, _irfftn(hat / sym, form.grid.shape))


def _project_off(form: FormField, basis, triple) -> FormField:
    for h in basis:
        form = form - l2_inner(form, h, triple) * h
    return form


def _plain_dot(u: FormField, v: FormField) -> float:
    return float(np.sum(u.comps * v.comps))


def _pcg(b: FormField, triple, kind, cfg: GreenSolveConfig, basis=None, x0=None, cache=None):
    """Solve Laplacian(x) = b (deflated) by CG on the symmetrized system.

    The weighted problem A x = b is recast as (W A) x = W b where W is the
    pointwise L2 weight; W A is plain-symmetric positive semidefinite because
    A = W^-1 d^T W d + d W^-1 d^T W, so textbook CG with the mode-wise flat
    preconditioner applies.  ``basis`` holds the kernel (harmonic) directions
    removed from the right-hand side.  Returns (x, relative residual).
    """
    cache = cache or get_cache(triple)
    # Galerkin restriction to the Nyquist-free subspace: the pointwise weight
    # multiplications fold spectral tails onto the Nyquist bins, where the
    # lattice derivative is not skew; filtering keeps the system symmetric.
    apply_B = lambda v: _dealias(_weight_apply(laplacian(v, triple, kind), triple))  # noqa: E731
    ref = _dealias(_weight_apply(b, triple))
    refnorm = _plain_dot(ref, ref) ** 0.5
    if basis:
        b = _project_off(b, basis, triple)
    rhs = _dealias(_weight_apply(b, triple))
    bnorm = _plain_dot(rhs, rhs) ** 0.5
    # a right-hand side that was (numerically) pure-harmonic solves to zero:
    # what survives deflation is basis-accuracy noise with a large kernel
    # fraction that no Krylov step can reduce
    if refnorm == 0.0 or bnorm <= max(cfg.rtol, 1e-9) * refnorm:
        return FormField.zeros(b.grid, b.degree), 0.0
    bnorm = max(bnorm, refnorm)
    if x0 is not None:
        x = _dealias(x0)
        r = rhs - apply_B(x)
    else:
        x = FormField.zeros(b.grid, b.degree)
        r = rhs.copy()
    use_pre = cfg.preconditioner == "flat_laplacian"
    z = _flat_precondition(cache, r) if use_pre else r.copy()
    p = z.copy()
    rz = _plain_dot(r, z)
    res = _plain_dot(r, r) ** 0.5
    it = 0
    while res > cfg.rtol * bnorm:
        if it >= cfg.max_iter:
            raise ConvergenceError(
                f"PCG stalled at relative residual {res / bnorm:.3e}",
                residual=res / bnorm,
                iterations=it,
            )
        Bp = apply_B(p)
        pBp = _plain_dot(p, Bp)
        if pBp <= 0.0:
            raise ConvergenceError(
                "PCG lost positive-definiteness (metric too rough?)",
                residual=res / bnorm,
                iterations=it,
            )
        alpha = rz / pBp
        x = x + alpha * p
        r = r - alpha * Bp
        it += 1
        if it % 50 == 0:
            # guard against drift: recompute the true residual
            r = rhs - apply_B(x)
        z = _flat_precondition(cache, r) if use_pre else r.copy()
        rz_new = _plain_dot(r, z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
        res = _plain_dot(r, r) ** 0.5
    return x, res / bnorm


def green(
    psi,
    triple: CompatibleTriple,
    kind: str = "metric",
    cfg: GreenSolveConfig | None = None,
    x0: FormField | None = None,
) -> FormField:
    """Green operator: solves Laplacian(x) = psi - harmonic part, x orthogonal to it."""
    psi = as_form(psi)
    cfg = cfg or GreenSolveConfig()
    cache = get_cache(triple)
    if cache.const_metric:
        # constant-coefficient metric: the Laplacian is -g^{ab} d_a d_b per
        # component (the J conjugation drops out for constant J), solved exactly
        hat = _rfftn(psi.comps)
        sym = cache._const_symbol()
        zero = sym == 0.0
        sym = sym.copy()
        sym[zero] = 1.0
        hat = hat / sym
        hat[..., zero] = 0.0
        return FormField(psi.grid, psi.degree, _irfftn(hat, psi.grid.shape))
    basis = cache.harmonic_basis(psi.degree, kind, cfg)
    x, _ = _pcg(psi, triple, kind, cfg, basis=basis, x0=x0, cache=cache)
    return _project_off(x, basis, triple)


def harmonic_project(psi, triple: CompatibleTriple, kind: str = "metric") -> FormField:
    """L2-orthogonal projection onto the harmonic space of the chosen Laplacian."""
    psi = as_form(psi)
    cache = get_cache(triple)
    basis = cache.harmonic_basis(psi.degree, kind)
    out = FormField.zeros(psi.grid, psi.degree)
    for h in basis:
        out = out + l2_inner(psi, h, triple) * h
    return out


def harmonic_basis(triple: CompatibleTriple, degree: int, kind: str = "metric"):
    return get_cache(triple).harmonic_basis(degree, kind)


def hodge_decompose(psi, triple: CompatibleTriple, kind: str = "metric", cfg=None):
    """Split psi into (harmonic, d-potential, codifferential-potential).

    psi = harmonic + d(d_potential) + delta(cod_potential); either potential is
    None when the degree leaves no room for it.
    """
    psi = as_form(psi)
    p = psi.degree
    G = green(psi, triple, kind, cfg)
    harm = harmonic_project(psi, triple, kind)
    if kind == "metric":
        dd = exterior_d
        cd = lambda x: codifferential(x, triple)  # noqa: E731
    else:
        dd = lambda x: twisted_d(x, triple)  # noqa: E731
        cd = lambda x: twisted_codifferential(x, triple)  # noqa: E731
    d_pot = cd(G) if p >= 1 else None
    cod_pot = dd(G) if p <= 3 else None
    return harm, d_pot, cod_pot
