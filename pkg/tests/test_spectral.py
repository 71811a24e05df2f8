import numpy as np
import pytest

from akgeo import (
    ConvergenceError,
    DegreeError,
    FormField,
    GridSpec,
    ScalarField,
    build_torus_grid,
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
    twisted_codifferential,
    twisted_d,
)
from akgeo.grid import j_act_cached, l2_inner, l2_norm, type_decompose
from akgeo.sampling import random_form, random_scalar
from akgeo.spectral import GreenSolveConfig, codifferential_star, get_cache


class TestExteriorD:
    def test_constant_scalar(self, flat8):
        f = ScalarField(flat8.grid, np.ones(flat8.grid.shape))
        assert exterior_d(f).sup_norm() == 0.0

    def test_analytic_derivative(self, flat16):
        x = flat16.grid.meshgrid()
        a = FormField.zeros(flat16.grid, 1)
        a.comps[1] = np.sin(2 * np.pi * x[0])
        da = exterior_d(a)
        expect = FormField.zeros(flat16.grid, 2)
        expect.comps[0] = 2 * np.pi * np.cos(2 * np.pi * x[0])
        assert np.max(np.abs(da.comps - expect.comps)) < 1e-12

    def test_d_squared_zero(self, flat16, rng):
        psi = random_form(flat16.grid, 1, rng)
        assert exterior_d(exterior_d(psi)).sup_norm() < 1e-11

    def test_degree_four_rejected(self, flat8, rng):
        with pytest.raises(DegreeError):
            exterior_d(random_form(flat8.grid, 4, rng))


class TestHodgeStar:
    def test_omega_self_dual(self, generic12):
        sw = hodge_star(generic12.omega, generic12)
        assert np.max(np.abs(sw.comps - generic12.omega.comps)) < 1e-10

    def test_involution(self, generic12, rng):
        for p in range(5):
            psi = random_form(generic12.grid, p, rng)
            ss = hodge_star(hodge_star(psi, generic12), generic12)
            assert np.max(np.abs(ss.comps - (-1) ** p * psi.comps)) < 1e-12

    def test_type_parts_eigensign(self, generic12, rng):
        psi = random_form(generic12.grid, 2, rng)
        s, anti, inv0 = type_decompose(psi, generic12)
        somega = s * generic12.omega
        for part, sign in ((somega, 1.0), (anti, 1.0), (inv0, -1.0)):
            sp = hodge_star(part, generic12)
            assert np.max(np.abs(sp.comps - sign * part.comps)) < 1e-10 * max(
                1.0, part.sup_norm()
            )


class TestCodifferential:
    def test_omega_coclosed_flat(self, flat8):
        assert codifferential(flat8.omega, flat8).sup_norm() < 1e-14

    def test_adjointness_exact(self, generic12, rng):
        a = random_form(generic12.grid, 1, rng)
        b = random_form(generic12.grid, 2, rng)
        lhs = l2_inner(exterior_d(a), b, generic12)
        rhs = l2_inner(a, codifferential(b, generic12), generic12)
        assert abs(lhs - rhs) < 1e-13 * abs(lhs)

    def test_delta_squared_zero(self, generic12, rng):
        psi = random_form(generic12.grid, 3, rng)
        dd = codifferential(codifferential(psi, generic12), generic12)
        assert l2_norm(dd, generic12) < 1e-12

    def test_agrees_with_star_route(self, generic12, rng):
        psi = random_form(generic12.grid, 2, rng)
        d1 = codifferential(psi, generic12)
        d2 = codifferential_star(psi, generic12)
        assert l2_norm(d1 - d2, generic12) < 1e-10 * l2_norm(psi, generic12)

    def test_degree_zero_rejected(self, flat8):
        with pytest.raises(DegreeError):
            codifferential(ScalarField.zeros(flat8.grid), flat8)


class TestTwistedOperators:
    def test_dc_of_constant(self, generic12):
        f = ScalarField(generic12.grid, np.ones(generic12.grid.shape))
        assert twisted_d(f, generic12).sup_norm() < 1e-14

    def test_dc_on_functions_is_j_of_df(self, generic12, rng):
        from akgeo.grid import j_act

        f = random_scalar(generic12.grid, rng)
        lhs = twisted_d(f, generic12)
        rhs = j_act(exterior_d(f), generic12.J)
        assert l2_norm(lhs - rhs, generic12) < 1e-13

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_commutator_lambda_dc(self, generic12, rng, rel, p):
        psi = random_form(generic12.grid, p, rng)
        lhs = contraction(twisted_d(psi, generic12), generic12)
        if p >= 2:
            lhs = lhs - twisted_d(contraction(psi, generic12), generic12)
        assert rel(lhs, codifferential(psi, generic12), generic12) < 1e-12

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_commutator_lambda_d(self, generic12, rng, rel, p):
        psi = random_form(generic12.grid, p, rng)
        lhs = contraction(exterior_d(psi), generic12)
        if p >= 2:
            lhs = lhs - exterior_d(contraction(psi, generic12))
        assert rel(lhs, -twisted_codifferential(psi, generic12), generic12) < 1e-12

    @pytest.mark.parametrize("p", [0, 1, 2])
    def test_commutator_lefschetz_delta(self, generic12, rng, rel, p):
        psi = random_form(generic12.grid, p, rng)
        lhs = -codifferential(lefschetz(psi, generic12), generic12)
        if p >= 1:
            lhs = lhs + lefschetz(codifferential(psi, generic12), generic12)
        assert rel(lhs, twisted_d(psi, generic12), generic12) < 1e-12

    @pytest.mark.parametrize("p", [1, 2, 3])
    def test_anticommutators(self, generic12, rng, p):
        psi = random_form(generic12.grid, p, rng)
        a1 = twisted_d(codifferential(psi, generic12), generic12) + codifferential(
            twisted_d(psi, generic12), generic12
        )
        a2 = exterior_d(twisted_codifferential(psi, generic12)) + twisted_codifferential(
            exterior_d(psi), generic12
        )
        scale = l2_norm(psi, generic12)
        assert l2_norm(a1, generic12) < 1e-11 * scale
        assert l2_norm(a2, generic12) < 1e-11 * scale


class TestLefschetz:
    def test_lambda_omega_is_two(self, generic12):
        lam = contraction(generic12.omega, generic12)
        assert np.max(np.abs(lam.comps[0] - 2.0)) < 1e-10

    def test_adjointness(self, generic12, rng):
        a = random_form(generic12.grid, 1, rng)
        b = random_form(generic12.grid, 3, rng)
        lhs = l2_inner(lefschetz(a, generic12), b, generic12)
        rhs = l2_inner(a, contraction(b, generic12), generic12)
        assert abs(lhs - rhs) < 1e-12 * abs(lhs)


class TestLaplacian:
    def test_constant_in_kernel(self, generic12):
        f = ScalarField(generic12.grid, np.ones(generic12.grid.shape))
        assert laplacian(f, generic12).sup_norm() < 1e-12

    def test_flat_symbol(self, flat16):
        x = flat16.grid.meshgrid()
        f = ScalarField(flat16.grid, np.sin(2 * np.pi * (x[0] + 2 * x[2])))
        lap = laplacian(f, flat16)
        assert np.max(np.abs(lap.comps[0] - 4 * np.pi**2 * 5 * f.values)) < 1e-11

    def test_self_adjoint_and_nonnegative(self, generic12, rng):
        u = random_form(generic12.grid, 2, rng)
        v = random_form(generic12.grid, 2, rng)
        lhs = l2_inner(laplacian(u, generic12), v, generic12)
        rhs = l2_inner(u, laplacian(v, generic12), generic12)
        assert abs(lhs - rhs) < 1e-12 * abs(lhs)
        assert l2_inner(laplacian(u, generic12), u, generic12) >= -1e-9

    def test_star_commutes(self, generic12, rng, rel):
        psi = random_form(generic12.grid, 2, rng)
        a = hodge_star(laplacian(psi, generic12), generic12)
        b = laplacian(hodge_star(psi, generic12), generic12)
        assert rel(a, b, generic12) < 1e-11

    def test_twisted_is_j_conjugate(self, generic12, rng, rel):
        psi = random_form(generic12.grid, 2, rng)
        conj = j_act_cached(laplacian(j_act_cached(psi, generic12), generic12), generic12)
        assert rel(conj, laplacian(psi, generic12, "twisted"), generic12) < 1e-10


class TestHarmonics:
    def test_flat_basis_is_constant_forms(self, flat12):
        basis = harmonic_basis(flat12, 2)
        assert len(basis) == 6
        for h in basis:
            flat_comps = h.comps.reshape(6, -1)
            assert np.max(np.std(flat_comps, axis=1)) < 1e-12

    def test_flat_projection_is_mean(self, flat12, rng):
        psi = random_form(flat12.grid, 2, rng)
        ph = harmonic_project(psi, flat12)
        means = psi.comps.reshape(6, -1).mean(axis=1)
        for i in range(6):
            assert np.max(np.abs(ph.comps[i] - means[i])) < 1e-12

    def test_betti_dimensions_modulated(self, generic12):
        for p, b in ((0, 1), (1, 4), (2, 6), (3, 4), (4, 1)):
            assert len(harmonic_basis(generic12, p)) == b
        for p, b in ((1, 4), (2, 6)):
            assert len(harmonic_basis(generic12, p, "twisted")) == b

    def test_basis_orthonormal(self, generic12):
        basis = harmonic_basis(generic12, 2)
        for i, hi in enumerate(basis):
            for j, hj in enumerate(basis):
                val = l2_inner(hi, hj, generic12)
                assert val == pytest.approx(1.0 if i == j else 0.0, abs=1e-11)

    def test_basis_residual_contract(self, block16):
        cache = get_cache(block16)
        cache.harmonic_basis(2, "metric")
        assert cache.basis_residual(2, "metric") < 1e-8

    def test_exact_forms_have_no_harmonic_part(self, generic12, rng):
        phi = random_form(generic12.grid, 1, rng, band_fraction=0.4)
        dphi = exterior_d(phi)
        hp = harmonic_project(dphi, generic12)
        assert l2_norm(hp, generic12) < 1e-11 * l2_norm(dphi, generic12)

    def test_flat_anti_invariant_harmonic_count(self, flat12):
        # on the flat torus, J-anti-invariant harmonic 2-forms span 2 = b^+ - 1
        basis = harmonic_basis(flat12, 2)
        vecs = []
        for h in basis:
            _, anti, _ = type_decompose(h, flat12)
            vecs.append(anti.comps.reshape(-1))
        m = np.array(vecs)
        svals = np.linalg.svd(m, compute_uv=False)
        assert int((svals > 1e-8 * svals[0]).sum()) == 2


class TestGreen:
    def test_harmonic_maps_to_zero(self, generic12):
        h = harmonic_basis(generic12, 2)[0]
        gh = green(h, generic12)
        assert l2_norm(gh, generic12) < 1e-10

    def test_flat_mode_inverse(self, flat16):
        x = flat16.grid.meshgrid()
        f = ScalarField(flat16.grid, np.sin(2 * np.pi * (x[0] + x[3])))
        gf = green(f, flat16)
        assert np.max(np.abs(gf.comps[0] - f.values / (8 * np.pi**2))) < 1e-13

    def test_defect_and_orthogonality(self, generic12, rng):
        psi = random_form(generic12.grid, 2, rng, band_fraction=0.35)
        G = green(psi, generic12)
        defect = laplacian(G, generic12) - (psi - harmonic_project(psi, generic12))
        assert l2_norm(defect, generic12) < 5e-6 * l2_norm(psi, generic12)
        for h in harmonic_basis(generic12, 2):
            assert abs(l2_inner(G, h, generic12)) < 1e-11

    def test_commutes_with_d(self, generic12, rng, rel):
        a = random_form(generic12.grid, 1, rng, band_fraction=0.35)
        assert rel(green(exterior_d(a), generic12), exterior_d(green(a, generic12)), generic12) < 5e-6

    def test_commutes_with_star(self, block16, rng, rel):
        psi = random_form(block16.grid, 2, rng, band_fraction=0.3)
        a = hodge_star(green(psi, block16), block16)
        b = green(hodge_star(psi, block16), block16)
        assert rel(a, b, block16) < 1e-8

    def test_self_adjoint(self, generic12, rng):
        a = random_form(generic12.grid, 2, rng)
        b = random_form(generic12.grid, 2, rng)
        lhs = l2_inner(green(a, generic12), b, generic12)
        rhs = l2_inner(a, green(b, generic12), generic12)
        assert abs(lhs - rhs) < 1e-8 * abs(lhs)

    def test_twisted_defect(self, generic12, rng):
        psi = random_form(generic12.grid, 2, rng, band_fraction=0.35)
        G = green(psi, generic12, "twisted")
        defect = laplacian(G, generic12, "twisted") - (
            psi - harmonic_project(psi, generic12, "twisted")
        )
        assert l2_norm(defect, generic12) < 5e-6 * l2_norm(psi, generic12)

    def test_convergence_error_carries_diagnostics(self, generic12, rng):
        psi = random_form(generic12.grid, 2, rng)
        cfg = GreenSolveConfig(rtol=1e-13, max_iter=2)
        with pytest.raises(ConvergenceError) as exc:
            green(psi, generic12, "metric", cfg)
        assert exc.value.residual is not None
        assert exc.value.iterations == 2


class TestHodgeDecompose:
    def test_reassembly(self, generic12, rng):
        psi = random_form(generic12.grid, 2, rng, band_fraction=0.35)
        harm, dpot, cpot = hodge_decompose(psi, generic12)
        rec = harm + exterior_d(dpot) + codifferential(cpot, generic12)
        assert l2_norm(rec - psi, generic12) < 5e-6 * l2_norm(psi, generic12)

    def test_closed_form_has_no_coexact_part(self, generic12, rng):
        phi = random_form(generic12.grid, 1, rng, band_fraction=0.35)
        psi = exterior_d(phi)
        harm, dpot, cpot = hodge_decompose(psi, generic12)
        coexact = codifferential(cpot, generic12)
        assert l2_norm(coexact, generic12) < 5e-6 * l2_norm(psi, generic12)
        assert l2_norm(harm, generic12) < 1e-9 * l2_norm(psi, generic12)

    def test_twisted_reassembly(self, generic12, rng):
        psi = random_form(generic12.grid, 2, rng, band_fraction=0.35)
        harm, dpot, cpot = hodge_decompose(psi, generic12, "twisted")
        rec = (
            harm
            + twisted_d(dpot, generic12)
            + twisted_codifferential(cpot, generic12)
        )
        assert l2_norm(rec - psi, generic12) < 5e-6 * l2_norm(psi, generic12)
