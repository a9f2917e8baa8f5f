"""Flow, relative periods, saturation, cleanness, densities, leading terms."""

import numpy as np
import pytest

import foltrace as ft
from foltrace.errors import CleannessViolationError
from foltrace.geometric import (
    relative_fixed_point_defect,
    return_map_matrix,
    subprincipal_phase,
    torus_average,
    weyl_component,
)
from foltrace.model import torus_dist
from foltrace.oracle import brute_force_periods, poisson_amplitude
from conftest import GOLDEN, random_flat_model


class TestFlow:
    def test_zero_time_identity(self, product_model):
        nu = ft.conormal(product_model, [0.3, 0.6], [0.0, 2.0])
        out = ft.flow(product_model, nu, 0.0)
        np.testing.assert_allclose(out.x, nu.x, atol=1e-15)

    def test_unit_period_product(self, product_model):
        nu = ft.conormal(product_model, [0.3, 0.6], [0.0, 1.0])
        out = ft.flow(product_model, nu, 1.0)
        assert torus_dist(out.x, nu.x) < 1e-12

    def test_group_law_and_conservation(self, kronecker_model):
        m = kronecker_model
        rng = np.random.default_rng(2)
        for _ in range(20):
            nu = ft.conormal(m, rng.random(2), m.cov_from_frame(rng.normal(size=1)))
            t1, t2 = rng.normal(size=2) * 3.0
            one = ft.flow(m, nu, t1 + t2)
            two = ft.flow(m, ft.flow(m, nu, t1), t2)
            assert torus_dist(one.x, two.x) < 1e-10
            assert abs(
                ft.transverse_symbol(m, one) - ft.transverse_symbol(m, nu)
            ) < 1e-10

    def test_rk4_matches_exact(self, kronecker_model):
        m = kronecker_model
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(5):
            nu = ft.conormal(m, rng.random(2), m.cov_from_frame([1.3]))
            for t in np.linspace(0.5, 10.0, 6):
                a = ft.flow(m, nu, float(t), method="exact")
                b = ft.flow(m, nu, float(t), method="rk4", step=1e-3)
                worst = max(worst, torus_dist(a.x, b.x))
                worst = max(worst, float(np.max(np.abs(a.xi - b.xi))))
        assert worst < 1e-8

    def test_rk4_rejects_bad_step(self, product_model):
        nu = ft.conormal(product_model, [0.0, 0.0], [0.0, 1.0])
        with pytest.raises(ValueError):
            ft.flow(product_model, nu, 1.0, method="rk4", step=0.0)


class TestRelativePeriods:
    def test_product_small_support(self, product_model):
        comps = ft.find_relative_periods(product_model, 0.5, 3.0)
        assert [c.t for c in comps] == pytest.approx([1.0, 2.0, 3.0])
        assert all(c.shift_norm == 0.0 for c in comps)
        assert all(c.v[1] == k + 1 for k, c in enumerate(comps))
        # lattice vectors with a leafwise part are excluded at S = 0.5
        assert all(c.v[0] == 0 for c in comps)

    def test_product_wide_support_includes_shifts(self, product_model):
        k = ft.build_kernel(product_model, support=2.0)
        comps = ft.find_relative_periods(product_model, k, 1.5)
        at_one = [c for c in comps if abs(c.t - 1.0) < 1e-12]
        assert sorted(c.v for c in at_one) == [(0, 1), (1, -1), (1, 1)]

    def test_kronecker_first_component(self, kronecker_model, kronecker_kernel):
        comps = ft.find_relative_periods(kronecker_model, kronecker_kernel, 1.0)
        by_v = {c.v: c for c in comps}
        c01 = by_v[(0, 1)]
        assert c01.t == pytest.approx(1.0 / np.sqrt(1.0 + GOLDEN**2), rel=1e-12)
        assert c01.shift_norm == pytest.approx(
            GOLDEN / np.sqrt(1.0 + GOLDEN**2), rel=1e-12
        )

    def test_kronecker_full_window(self, kronecker_model, kronecker_kernel):
        comps = ft.find_relative_periods(kronecker_model, kronecker_kernel, 3.0)
        assert len(comps) == 11
        ts = [c.t for c in comps]
        assert ts == sorted(ts)
        # discreteness: gaps bounded below
        assert np.diff(ts).min() > 0.12

    def test_short_window_empty(self, kronecker_model, kronecker_kernel):
        assert ft.find_relative_periods(kronecker_model, kronecker_kernel, 0.3) == []

    def test_null_kernel_empty(self, product_model):
        null = ft.build_kernel(product_model, {(0, 0): 0.0}, support=1.0)
        assert ft.find_relative_periods(product_model, null, 3.0) == []

    def test_direction_is_unit_conormal(self, kronecker_model, kronecker_kernel):
        for comp in ft.find_relative_periods(kronecker_model, kronecker_kernel, 3.0):
            nu = ft.conormal(kronecker_model, np.zeros(2), comp.direction)
            assert ft.transverse_symbol(kronecker_model, nu) == pytest.approx(1.0)
            assert relative_fixed_point_defect(
                kronecker_model, comp.t, comp.direction, comp.shift
            ) < 1e-10

    def test_grid_oracle_agreement(self, kronecker_model, kronecker_kernel):
        comps = ft.find_relative_periods(kronecker_model, kronecker_kernel, 3.0)
        brute = brute_force_periods(kronecker_model, 2.0, 3.0)
        assert len(brute) == len(comps)
        for mine, ref in zip(comps, brute):
            assert mine.v == ref.v
            assert abs(mine.t - ref.t) < 1e-6
            assert abs(mine.shift_norm - ref.shift_norm) < 1e-6


class TestSaturation:
    def test_components_saturated(self, kronecker_model, kronecker_kernel):
        for comp in ft.find_relative_periods(kronecker_model, kronecker_kernel, 2.0):
            assert ft.saturation_check(kronecker_model, comp, sample_count=50)

    def test_weyl_diagonal_saturated(self, product_model):
        comp = weyl_component(product_model)
        assert ft.saturation_check(product_model, comp, sample_count=20)

    def test_restricted_set_not_saturated(self, kronecker_model, kronecker_kernel):
        comp = ft.find_relative_periods(kronecker_model, kronecker_kernel, 1.0)[0]

        def half_torus_membership(x, xi_hat, w):
            if x[0] >= 0.5:
                return False
            return relative_fixed_point_defect(
                kronecker_model, comp.t, xi_hat, w
            ) < 1e-10

        assert not ft.saturation_check(
            kronecker_model, comp, sample_count=50, membership=half_torus_membership
        )


class TestCleanness:
    def test_codim_one_fixed_space_is_everything(self, product_model):
        comp = ft.find_relative_periods(product_model, 0.5, 1.5)[0]
        rep = ft.cleanness_check(product_model, comp)
        assert rep.ok
        assert rep.dim_found == 2 == rep.dim_expected

    def test_codim_two_fixed_space(self, torus3_model):
        comp = ft.find_relative_periods(torus3_model, 0.5, 1.2)[0]
        rep = ft.cleanness_check(torus3_model, comp)
        assert rep.ok
        assert rep.dim_found == 3 == rep.dim_expected  # q + 1
        mat = np.eye(4) - return_map_matrix(torus3_model, comp)
        assert np.linalg.matrix_rank(mat, tol=1e-10) == 1

    def test_randomized_models(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            model = random_flat_model(rng)
            comps = ft.find_relative_periods(model, 0.9, 2.5)
            for comp in comps[:4]:
                rep = ft.cleanness_check(model, comp)
                assert rep.ok, (model.n, model.p, comp.v)
                assert ft.saturation_check(model, comp, sample_count=20)


class TestDensity:
    def test_codim_one_mass_is_volume(self, product_model):
        comp = ft.find_relative_periods(product_model, 0.5, 1.5)[0]
        assert ft.fixed_point_density(product_model, comp) == pytest.approx(1.0)

    def test_codim_one_metric_volume(self):
        g = [[2.0, 0.3], [0.3, 1.5]]
        model = ft.build_model(2, 1, [[1.0], [0.0]], metric=g)
        comp = ft.find_relative_periods(model, 0.5, 2.0)[0]
        assert ft.fixed_point_density(model, comp) == pytest.approx(
            np.sqrt(np.linalg.det(g)), rel=1e-12
        )

    def test_codim_two_curvature_factor(self, torus3_model):
        comps = ft.find_relative_periods(torus3_model, 0.5, 1.5)
        by_t = {round(c.t, 9): c for c in comps}
        one = ft.fixed_point_density(torus3_model, by_t[1.0])
        root2 = ft.fixed_point_density(torus3_model, by_t[round(np.sqrt(2.0), 9)])
        assert one == pytest.approx(1.0)
        assert root2 == pytest.approx(2.0 ** -0.25, rel=1e-10)


class TestLeadingCoefficient:
    @staticmethod
    def _group_totals(comps):
        totals = {}
        for c in comps:
            key = round(c.t, 9)
            totals[key] = totals.get(key, 0.0) + c.alpha0
        return totals

    def test_product_against_closed_form(self, product_model, product_kernel):
        comps = ft.find_relative_periods(product_model, product_kernel, 2.0)
        for t_val, total in self._group_totals(comps).items():
            closed = poisson_amplitude(product_model, product_kernel, t_val)
            assert total == pytest.approx(closed, rel=1e-8)

    def test_kronecker_against_closed_form(self, kronecker_model, kronecker_kernel):
        comps = ft.find_relative_periods(kronecker_model, kronecker_kernel, 3.0)
        for t_val, total in self._group_totals(comps).items():
            closed = poisson_amplitude(kronecker_model, kronecker_kernel, t_val)
            assert total == pytest.approx(closed, rel=1e-8)

    def test_metric_weighted_closed_form(self):
        # anisotropic metric: lattice coincidences merge distinct pairs
        # into one period group, and the volume factor is sqrt(det g)
        g = [[2.0, 0.3], [0.3, 1.5]]
        model = ft.build_model(2, 1, [[1.0], [0.0]], metric=g)
        kernel = ft.build_kernel(model, support=1.2)
        comps = ft.find_relative_periods(model, kernel, 2.5)
        assert comps
        for t_val, total in self._group_totals(comps).items():
            closed = poisson_amplitude(model, kernel, t_val)
            assert total == pytest.approx(closed, rel=1e-8)

    def test_drift_rotates_orientations_oppositely(self, drift_model):
        kernel = ft.build_kernel(drift_model, support=0.5)
        comp = ft.find_relative_periods(drift_model, kernel, 1.5)[0]
        plus = subprincipal_phase(drift_model, comp, 1)
        minus = subprincipal_phase(drift_model, comp, -1)
        assert plus == pytest.approx(np.exp(1j * 0.05), rel=1e-10)
        assert minus == pytest.approx(np.exp(-1j * 0.05), rel=1e-10)
        # pair sum: modulus shrinks by cos, phase stays real
        assert comp.alpha0.imag == pytest.approx(0.0, abs=1e-12)
        base = ft.build_model(2, 1, [[1.0], [0.0]])
        base_kernel = ft.build_kernel(base, support=0.5)
        base_comp = ft.find_relative_periods(base, base_kernel, 1.5)[0]
        assert comp.alpha0.real == pytest.approx(
            base_comp.alpha0.real * np.cos(0.05), rel=1e-10
        )

    def test_support_excludes_component(self, product_model):
        # v = (1, 1) needs |w| = 1 < S; at S = 0.5 it is not a component
        k_small = ft.build_kernel(product_model, support=0.5)
        vs = {c.v for c in ft.find_relative_periods(product_model, k_small, 1.5)}
        assert (1, 1) not in vs
        k_big = ft.build_kernel(product_model, support=1.2)
        vs_big = {c.v for c in ft.find_relative_periods(product_model, k_big, 1.5)}
        assert (1, 1) in vs_big

    def test_phi_scaling(self, product_model):
        k1 = ft.build_kernel(product_model, {(0, 0): 1.0}, support=0.5)
        k2 = ft.build_kernel(product_model, {(0, 0): 2.0}, support=0.5)
        c1 = ft.find_relative_periods(product_model, k1, 1.5)[0]
        c2 = ft.find_relative_periods(product_model, k2, 1.5)[0]
        assert c2.alpha0 == pytest.approx(2.0 * c1.alpha0, rel=1e-12)
        assert c2.density_mass == pytest.approx(c1.density_mass, rel=1e-12)

    def test_translation_equivariance(self, product_model):
        coeffs = {(0, 0): 1.0, (1, 0): 0.3 + 0.1j, (-1, 0): 0.3 - 0.1j}
        k = ft.build_kernel(product_model, coeffs, support=0.5)
        shifted = ft.build_kernel(
            product_model,
            ft.TrigPolynomial(coeffs).translated([0.37, 0.11]).coeffs,
            support=0.5,
        )
        c_orig = ft.find_relative_periods(product_model, k, 1.5)[0]
        c_shift = ft.find_relative_periods(product_model, shifted, 1.5)[0]
        assert c_shift.alpha0 == pytest.approx(c_orig.alpha0, rel=1e-9)

    def test_cleanness_gate(self, product_model, product_kernel):
        comp = ft.find_relative_periods(product_model, product_kernel, 1.5)[0]
        broken = type(comp)(
            t=comp.t, v=comp.v, direction=comp.direction, shift=comp.shift,
            shift_norm=comp.shift_norm, eta_frame=comp.eta_frame, d=comp.d + 1,
            maslov=comp.maslov, alpha0=comp.alpha0, density_mass=comp.density_mass,
        )
        with pytest.raises(CleannessViolationError):
            ft.fixed_point_density(product_model, broken)

    def test_torus_average_smooth(self):
        phi = ft.TrigPolynomial({(0, 0): 1.0, (2, 1): 0.25 - 0.5j, (-2, -1): 0.25 + 0.5j})
        assert torus_average(phi, 2) == pytest.approx(1.0, rel=1e-9)


class TestAnisotropicEndToEnd:
    def test_probe_matches_density_route(self):
        # no axis-aligned shortcut survives here: the metric mixes the
        # coordinates and one period group contains two lattice pairs
        g = [[2.0, 0.3], [0.3, 1.5]]
        model = ft.build_model(2, 1, [[1.0], [0.0]], metric=g)
        kernel = ft.build_kernel(model, support=1.2)
        comps = ft.find_relative_periods(model, kernel, 2.5)
        table = ft.enumerate_spectrum(model, 600.0, kernel=kernel)
        for t_val in sorted({round(c.t, 9) for c in comps}):
            total = sum(c.alpha0 for c in comps if abs(c.t - t_val) < 1e-9)
            probe = ft.amplitude_probe(
                model, kernel, t_val, np.geomspace(80, 350, 10), 0.05, table=table
            )
            assert abs(probe.fitted_alpha0) == pytest.approx(abs(total), rel=0.01)
            assert abs(probe.fitted_exponent) < 0.02


class TestPeriodSymmetry:
    def test_pair_merging_covers_both_signs(self, kronecker_model, kronecker_kernel):
        comps = ft.find_relative_periods(kronecker_model, kronecker_kernel, 2.0)
        for comp in comps:
            # the -v orientation satisfies the fixed point equation too
            assert relative_fixed_point_defect(
                kronecker_model, comp.t, -comp.direction, -comp.shift
            ) < 1e-10
