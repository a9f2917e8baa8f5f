"""Model construction, transport, symbols, kernels."""

import numpy as np
import pytest

import foltrace as ft
from foltrace.errors import (
    BasePointMismatchError,
    ConormalValidationError,
    DriftNotTransverseError,
    DriftTooStrongError,
    KernelValidationError,
    LeafBasisRankError,
    MetricNotSPDError,
    ShiftNotLeafwiseError,
)
from foltrace.kernels import bump
from foltrace.model import compose
from conftest import GOLDEN, random_flat_model


class TestBuildModel:
    def test_product_foliation(self, product_model):
        m = product_model
        assert m.q == 1
        np.testing.assert_allclose(m.proj_v @ [1.0, 0.0], [1.0, 0.0], atol=1e-14)
        np.testing.assert_allclose(m.proj_h @ [0.0, 1.0], [0.0, 1.0], atol=1e-14)

    def test_kronecker_foliation(self, kronecker_model):
        m = kronecker_model
        u = np.array([1.0, GOLDEN]) / np.sqrt(1.0 + GOLDEN**2)
        np.testing.assert_allclose(np.abs(m.leaf_frame[:, 0]), np.abs(u), atol=1e-14)

    def test_drift_model_validates(self):
        m = ft.build_model(2, 1, [[1.0], [0.0]], drift=[0.0, 0.1])
        # spectrum positivity by brute force over a large lattice block
        grid = np.arange(-1000, 1001)
        m1, m2 = np.meshgrid(grid, grid, indexing="ij")
        vals = 1.0 + 4.0 * np.pi**2 * m2**2 + 2.0 * np.pi * 0.1 * m2
        assert vals.min() > 0.0
        assert m.g_norm(m.drift) < 1.0

    def test_rank_deficient_leaf_rejected(self):
        with pytest.raises(LeafBasisRankError):
            ft.build_model(3, 2, [[1.0, 2.0], [0.0, 0.0], [1.0, 2.0]])

    def test_non_spd_metric_rejected(self):
        with pytest.raises(MetricNotSPDError):
            ft.build_model(2, 1, [[1.0], [0.0]], metric=[[1.0, 0.0], [0.0, -2.0]])
        with pytest.raises(MetricNotSPDError):
            ft.build_model(2, 1, [[1.0], [0.0]], metric=[[1.0, 0.5], [0.0, 1.0]])

    def test_leafwise_drift_rejected(self):
        with pytest.raises(DriftNotTransverseError):
            ft.build_model(2, 1, [[1.0], [0.0]], drift=[0.1, 0.0])

    def test_strong_drift_rejected(self):
        with pytest.raises(DriftTooStrongError):
            ft.build_model(2, 1, [[1.0], [0.0]], drift=[0.0, 1.0])

    def test_frames_are_g_orthonormal(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            m = random_flat_model(rng)
            frame = np.hstack([m.leaf_frame, m.trans_frame])
            gram = frame.T @ m.metric @ frame
            np.testing.assert_allclose(gram, np.eye(m.n), atol=1e-10)


class TestConormal:
    def test_rejects_leafwise_component(self, product_model):
        with pytest.raises(ConormalValidationError):
            ft.conormal(product_model, [0.0, 0.0], [0.5, 1.0])

    def test_rejects_zero(self, product_model):
        with pytest.raises(ConormalValidationError):
            ft.conormal(product_model, [0.0, 0.0], [0.0, 0.0])

    def test_kronecker_direction(self, kronecker_model):
        nu = ft.conormal(kronecker_model, [0.3, 0.7], [-GOLDEN, 1.0])
        assert abs(nu.xi @ np.array([1.0, GOLDEN])) < 1e-12


class TestTransport:
    def test_unit_arrow_is_identity(self, product_model):
        nu = ft.conormal(product_model, [0.2, 0.4], [0.0, 1.0])
        gamma = ft.holonomy_element(product_model, [0.2, 0.4], [0.0, 0.0])
        out = ft.holonomy_transport(product_model, gamma, nu)
        np.testing.assert_allclose(out.x, nu.x, atol=1e-15)
        np.testing.assert_allclose(out.xi, nu.xi, atol=1e-15)

    def test_kronecker_shift(self, kronecker_model):
        m = kronecker_model
        w = 2.0 * np.array([1.0, GOLDEN]) / np.sqrt(1.0 + GOLDEN**2)
        nu = ft.conormal(m, [0.3, 0.7], [-GOLDEN, 1.0])
        gamma = ft.holonomy_element(m, [0.3, 0.7], w)
        out = ft.holonomy_transport(m, gamma, nu)
        np.testing.assert_allclose(out.x, (np.array([0.3, 0.7]) - w) % 1.0, atol=1e-12)
        np.testing.assert_allclose(out.xi, nu.xi, atol=1e-15)

    def test_composition_law(self, kronecker_model):
        m = kronecker_model
        u = m.leaf_frame[:, 0]
        g1 = ft.holonomy_element(m, [0.1, 0.9], 0.7 * u)
        g2 = ft.holonomy_element(m, (np.array([0.1, 0.9]) - 0.7 * u) % 1.0, -0.2 * u)
        nu = ft.conormal(m, [0.1, 0.9], m.cov_from_frame([1.0]))
        via_two = ft.holonomy_transport(m, g2, ft.holonomy_transport(m, g1, nu))
        combined = compose(m, g1, g2)
        via_one = ft.holonomy_transport(m, combined, nu)
        np.testing.assert_allclose(via_two.x, via_one.x, atol=1e-12)
        np.testing.assert_allclose(via_two.xi, via_one.xi, atol=1e-15)

    def test_base_point_mismatch(self, product_model):
        nu = ft.conormal(product_model, [0.2, 0.4], [0.0, 1.0])
        gamma = ft.holonomy_element(product_model, [0.5, 0.5], [0.0, 0.0])
        with pytest.raises(BasePointMismatchError):
            ft.holonomy_transport(product_model, gamma, nu)

    def test_shift_must_be_leafwise(self, product_model):
        with pytest.raises(ShiftNotLeafwiseError):
            ft.holonomy_element(product_model, [0.0, 0.0], [0.0, 0.3])


class TestSymbols:
    def test_unit_covector(self, product_model):
        nu = ft.conormal(product_model, [0.0, 0.0], [0.0, 1.0])
        assert ft.transverse_symbol(product_model, nu) == pytest.approx(1.0)

    def test_homogeneity_degree_one(self, product_model):
        nu = ft.conormal(product_model, [0.0, 0.0], [0.0, 3.0])
        assert ft.transverse_symbol(product_model, nu) == pytest.approx(3.0)

    def test_anisotropic_metric(self):
        m = ft.build_model(2, 1, [[1.0], [0.0]], metric=[[1.0, 0.0], [0.0, 4.0]])
        nu = ft.conormal(m, [0.0, 0.0], [0.0, 1.0])
        assert ft.transverse_symbol(m, nu) == pytest.approx(0.5)

    def test_transport_preserves_symbol(self, kronecker_model):
        m = kronecker_model
        rng = np.random.default_rng(3)
        for _ in range(20):
            nu = ft.conormal(m, rng.random(2), m.cov_from_frame(rng.normal(size=1)))
            gamma = ft.holonomy_element(m, nu.x, float(rng.normal()) * m.leaf_frame[:, 0])
            out = ft.holonomy_transport(m, gamma, nu)
            assert ft.transverse_symbol(m, out) == pytest.approx(
                ft.transverse_symbol(m, nu), rel=1e-15
            )

    def test_subprincipal_zero_without_drift(self, product_model):
        rng = np.random.default_rng(5)
        for _ in range(10):
            nu = ft.conormal(product_model, rng.random(2), [0.0, float(rng.normal()) or 1.0])
            assert ft.subprincipal_p(product_model, nu) == 0.0

    def test_subprincipal_drift_value(self, drift_model):
        nu = ft.conormal(drift_model, [0.0, 0.0], [0.0, 1.0])
        assert ft.subprincipal_p(drift_model, nu) == pytest.approx(0.05)

    def test_subprincipal_degree_zero(self, drift_model):
        nu1 = ft.conormal(drift_model, [0.1, 0.2], [0.0, 1.0])
        nu2 = ft.conormal(drift_model, [0.1, 0.2], [0.0, 7.5])
        assert ft.subprincipal_p(drift_model, nu1) == pytest.approx(
            ft.subprincipal_p(drift_model, nu2), rel=1e-14
        )


class TestHolonomyInvariance:
    def test_product_model(self, product_model):
        assert ft.verify_holonomy_invariance(product_model, 100) < 1e-12

    def test_kronecker_model(self, kronecker_model):
        assert ft.verify_holonomy_invariance(kronecker_model, 100) < 1e-12

    def test_negative_control(self, product_model):
        def broken(x, xi):
            return (1.0 + 0.1 * np.sin(2.0 * np.pi * x[0])) * np.linalg.norm(xi)

        resid = ft.verify_holonomy_invariance(product_model, 100, symbol=broken)
        assert resid > 1e-2


class TestKernels:
    def test_bump_peak(self, product_kernel):
        gamma = ft.holonomy_element(product_kernel.model, [0.0, 0.0], [0.0, 0.0])
        val = ft.kernel_eval(product_kernel, gamma)
        assert val == pytest.approx(product_kernel.profile.peak())
        # unit-mass bump in 1d: peak = e^{-1} / (S * int b)
        assert val == pytest.approx(np.exp(-1.0) / (0.5 * 0.44399381616807865), rel=1e-9)

    def test_support_boundary(self, kronecker_model):
        k = ft.build_kernel(kronecker_model, support=2.0)
        w = 2.0 * kronecker_model.leaf_frame[:, 0]
        gamma = ft.holonomy_element(kronecker_model, [0.1, 0.1], w)
        assert ft.kernel_eval(k, gamma) == 0.0

    def test_phi_weight(self, product_model):
        k = ft.build_kernel(
            product_model, {(0, 0): 1.0, (1, 0): 0.5, (-1, 0): 0.5}, support=0.5
        )
        gamma = ft.holonomy_element(product_model, [0.0, 0.37], [0.0, 0.0])
        assert ft.kernel_eval(k, gamma) == pytest.approx(2.0 * k.terms[0].profile.peak())

    def test_phi_must_be_real(self, product_model):
        with pytest.raises(KernelValidationError):
            ft.build_kernel(product_model, {(1, 0): 1.0}, support=0.5)

    def test_fourier_unit_mass(self, product_kernel):
        assert product_kernel.profile.fourier(0.0) == pytest.approx(1.0, abs=1e-13)

    def test_fourier_quadrature_certified(self, product_kernel, kronecker_kernel):
        thetas = np.linspace(0.0, 60.0, 13)
        assert product_kernel.profile.quadrature_error(thetas) < 1e-10
        assert kronecker_kernel.profile.quadrature_error(thetas) < 1e-10

    def test_fourier_against_adaptive_quad(self, kronecker_kernel):
        from foltrace.oracle import psi_hat_quad

        prof = kernel = kronecker_kernel.profile
        for theta in (0.0, 1.3, 7.7, 31.4):
            assert prof.fourier(theta) == pytest.approx(
                psi_hat_quad(prof, theta), abs=1e-8
            )

    def test_fourier_decay(self, kronecker_kernel):
        # smooth compactly supported profile: superpolynomial decay; the
        # S=2 bump reaches 8.2e-5 of the peak at theta = 2 pi 5 and drops
        # below 1e-6 by theta = 2 pi 12 (values pinned by the adaptive
        # quadrature oracle).
        prof = kronecker_kernel.profile
        assert abs(prof.fourier(2.0 * np.pi * 5.0)) < 1e-4 * prof.fourier(0.0)
        assert abs(prof.fourier(2.0 * np.pi * 12.0)) < 1e-6 * prof.fourier(0.0)
        assert prof.envelope_beyond(2.0 * np.pi * 12.0) < 1e-6

    def test_fourier_3d_profile(self):
        from scipy.integrate import quad
        from scipy.special import jv

        prof = ft.BumpProfile(3, 1.0)
        theta = 4.2
        ref, _ = quad(
            lambda r: float(prof.value(r)) * np.sin(theta * r) * r,
            0.0,
            1.0,
            epsabs=1e-13,
        )
        ref *= 4.0 * np.pi / theta
        assert prof.fourier(theta) == pytest.approx(ref, abs=1e-10)

    def test_kernel_sum(self, product_model):
        k1 = ft.build_kernel(product_model, support=0.5)
        k2 = ft.build_kernel(product_model, {(0, 0): 2.0}, support=0.4)
        both = k1 + k2
        gamma = ft.holonomy_element(product_model, [0.0, 0.0], [0.0, 0.0])
        assert ft.kernel_eval(both, gamma) == pytest.approx(
            ft.kernel_eval(k1, gamma) + ft.kernel_eval(k2, gamma)
        )
