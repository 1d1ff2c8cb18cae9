"""Tests for grids, transforms, multipliers, derivatives and products."""

import numpy as np
import pytest
from scipy.signal import convolve2d

from qgk.grid import (
    GridSpec,
    RealField,
    SpectralField,
    hermitian_defect,
    multiplier_table,
    nyquist_mask,
    xi_squared,
)
from qgk import spectral as sp


def grid(n=16, L=2 * np.pi, dealias="three_halves_padding"):
    return GridSpec(n, L, dealias)


def rand(g, seed=0, hi=None):
    return sp.random_band_field(g, seed, 1.0, 3.0, 1, hi or g.n // 3)


class TestGridSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            GridSpec(15, 1.0)
        with pytest.raises(ValueError):
            GridSpec(6, 1.0)
        with pytest.raises(ValueError):
            GridSpec(16, -1.0)
        with pytest.raises(ValueError):
            GridSpec(16, 1.0, "no_such_rule")

    def test_wavevectors_scale(self):
        g = grid(16, L=4.0)
        q = xi_squared(g)
        assert q[1, 0] == pytest.approx((2 * np.pi / 4.0) ** 2, rel=1e-15)
        assert q[0, 0] == 0.0


class TestTransforms:
    def test_constant_field_dc_mode(self):
        g = grid()
        c = sp.forward_transform(RealField(g, np.ones(g.shape)))
        assert c.coeffs[0, 0] == pytest.approx(1.0, abs=1e-15)
        off = c.coeffs.copy()
        off[0, 0] = 0.0
        assert np.max(np.abs(off)) < 1e-14

    def test_single_cosine_modes(self):
        g = grid(32)
        x = np.arange(g.n) * g.dx
        samples = np.cos(2 * np.pi * x / g.box_length)[:, None] * np.ones(g.n)[None, :]
        c = sp.forward_transform(RealField(g, samples))
        assert c.coeffs[1, 0] == pytest.approx(0.5, abs=1e-13)
        assert c.coeffs[-1, 0] == pytest.approx(0.5, abs=1e-13)
        rest = c.coeffs.copy()
        rest[1, 0] = rest[-1, 0] = 0.0
        assert np.max(np.abs(rest)) < 1e-13

    def test_round_trip_random(self):
        g = grid(64)
        u = rand(g, 3)
        back = sp.forward_transform(sp.inverse_transform(u))
        err = np.max(np.abs(back.coeffs - u.coeffs)) / np.max(np.abs(u.coeffs))
        assert err < 1e-13

    def test_round_trip_with_nyquist_content(self):
        # arbitrary sampled data (Nyquist included) must round-trip exactly
        g = grid(16)
        rng = np.random.default_rng(7)
        f = RealField(g, rng.standard_normal(g.shape))
        back = sp.inverse_transform(sp.forward_transform(f))
        err = np.max(np.abs(back.samples - f.samples)) / np.max(np.abs(f.samples))
        assert err < 1e-13

    def test_parseval(self):
        g = grid(32, L=3.0)
        u = rand(g, 4)
        phys = sp.inverse_transform(u)
        quad = g.dx**2 * float(np.sum(phys.samples**2))
        assert quad == pytest.approx(sp.l2_norm(u) ** 2, rel=1e-12)

    def test_nonfinite_rejected(self):
        g = grid()
        samples = np.zeros(g.shape)
        samples[0, 0] = np.inf
        with pytest.raises(ValueError):
            sp.forward_transform(RealField(g, samples))


class TestMultipliers:
    def test_a_d_inverse_pair(self):
        g = grid(32)
        mt = multiplier_table(g)
        assert np.max(np.abs(mt.a * mt.d - 1.0)) < 1e-15
        u = rand(g, 5)
        v = sp.apply_multiplier(sp.apply_multiplier(u, mt.a), mt.d)
        assert np.max(np.abs(v.coeffs - u.coeffs)) / np.max(np.abs(u.coeffs)) < 1e-14

    def test_a_at_origin(self):
        g = grid()
        mt = multiplier_table(g)
        assert mt.a[0, 0] == 1.0
        assert mt.h[0, 0] == 0.0

    def test_h_at_unit_frequency(self):
        # printed symbol at |xi| = 1 evaluates to 2/3
        g = grid(16, L=2 * np.pi)  # frequency unit 1, so |k|=1 has |xi|=1
        mt = multiplier_table(g)
        assert mt.h[1, 0] == pytest.approx(2.0 / 3.0, rel=1e-15)

    def test_h_positive_and_asymptotic(self):
        g = grid(64)
        mt = multiplier_table(g)
        q = xi_squared(g)
        off = q > 0
        assert np.all(mt.h[off] > 0)
        big = q > 100.0
        assert np.allclose(mt.h[big] / q[big], 1.0, atol=0.02)

    def test_shape_mismatch(self):
        g = grid()
        u = rand(g)
        with pytest.raises(ValueError):
            sp.apply_multiplier(u, np.ones((4, 4)))

    def test_commutation_with_projection(self):
        g = grid(32)
        mt = multiplier_table(g)
        u = rand(g, 6)
        p1 = sp.project_jn(sp.apply_multiplier(u, mt.h), 9.0)
        p2 = sp.apply_multiplier(sp.project_jn(u, 9.0), mt.h)
        assert np.max(np.abs(p1.coeffs - p2.coeffs)) < 1e-14


class TestDerivatives:
    def test_laplacian_of_cosine(self):
        g = grid(32, L=5.0)
        u = sp.cosine_field(g, 1, 0, 1.0)
        lap = sp.laplacian(u)
        expected = -((2 * np.pi / 5.0) ** 2)
        assert np.allclose(lap.coeffs, expected * u.coeffs, atol=1e-15)

    def test_perp_gradient_divergence_free(self):
        g = grid(64)
        u = rand(g, 7)
        g1, g2 = sp.perp_gradient(u)
        div = sp.divergence(g1, g2)
        assert sp.l2_norm(div) <= 1e-13 * sp.l2_norm(g1)

    def test_perp_dot_gradient_vanishes_pointwise(self):
        g = grid(64)
        u = rand(g, 8)
        g1, g2 = sp.gradient(u)
        p1, p2 = sp.perp_gradient(u)
        a1 = sp.inverse_transform(g1).samples
        a2 = sp.inverse_transform(g2).samples
        b1 = sp.inverse_transform(p1).samples
        b2 = sp.inverse_transform(p2).samples
        dot = a1 * b1 + a2 * b2
        scale = np.max(np.hypot(a1, a2)) * np.max(np.hypot(b1, b2))
        assert np.max(np.abs(dot)) <= 1e-12 * scale

    def test_nyquist_zeroed(self):
        g = grid(16)
        coeffs = np.zeros(g.shape, complex)
        coeffs[g.n // 2, 0] = 1.0  # pure Nyquist content
        u = SpectralField(g, coeffs)
        for op in (sp.gradient, sp.perp_gradient):
            for comp in op(u):
                assert np.all(comp.coeffs == 0.0)
        assert np.all(sp.laplacian(u).coeffs == 0.0)
        assert np.all(sp.bilaplacian(u).coeffs == 0.0)


class TestProjection:
    def test_full_band_cutoff_is_identity(self):
        g = grid(32)
        u = rand(g, 9)
        n_cut = 2.0 * (g.frequency_unit * g.n / 2) ** 2
        v = sp.project_jn(u, n_cut)
        assert np.array_equal(v.coeffs, u.coeffs)

    def test_idempotent_bitwise(self):
        g = grid(32)
        u = rand(g, 10)
        once = sp.project_jn(u, 7.0)
        twice = sp.project_jn(once, 7.0)
        assert np.array_equal(once.coeffs, twice.coeffs)

    def test_self_adjoint(self):
        g = grid(32)
        u, v = rand(g, 11), rand(g, 12)
        lhs = sp.inner_product(sp.project_jn(u, 5.0), v)
        rhs = sp.inner_product(u, sp.project_jn(v, 5.0))
        assert lhs == pytest.approx(rhs, rel=1e-13)

    def test_rejects_nonpositive_cut(self):
        g = grid()
        with pytest.raises(ValueError):
            sp.project_jn(rand(g), 0.0)


def brute_force_convolution(u: SpectralField, v: SpectralField) -> np.ndarray:
    """Direct O(n^4) convolution of coefficient arrays, band-truncated."""
    n = u.grid.n
    a = np.fft.fftshift(u.coeffs)
    b = np.fft.fftshift(v.coeffs)
    full = convolve2d(a, b)  # ascending index from -n to n-2
    lo = n // 2  # index of s = -n/2 within the full array
    band = full[lo:lo + n, lo:lo + n]
    out = np.fft.ifftshift(band)
    out[n // 2, :] = 0.0  # products live on the symmetric band
    out[:, n // 2] = 0.0
    return out


class TestDealiasedProduct:
    def test_cos_squared_identity(self):
        g = grid(16)
        u = sp.cosine_field(g, 1, 0, 1.0)
        prod = sp.dealiased_product(u, u)
        # cos^2 = 1/2 + cos(2x)/2
        expected = np.zeros(g.shape, complex)
        expected[0, 0] = 0.5
        expected[2, 0] = 0.25
        expected[-2, 0] = 0.25
        assert np.max(np.abs(prod.coeffs - expected)) < 1e-14

    def test_product_with_constant(self):
        g = grid(16)
        u = rand(g, 13)
        one = SpectralField(g, np.zeros(g.shape, complex))
        one.coeffs[0, 0] = 1.0
        prod = sp.dealiased_product(u, one)
        assert np.max(np.abs(prod.coeffs - u.coeffs)) < 1e-14

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_brute_force_convolution(self, seed):
        g = grid(16)
        u = rand(g, 100 + seed, hi=7)
        v = rand(g, 200 + seed, hi=7)
        prod = sp.dealiased_product(u, v)
        ref = brute_force_convolution(u, v)
        scale = np.max(np.abs(ref))
        assert np.max(np.abs(prod.coeffs - ref)) <= 1e-12 * scale

    def test_full_band_inputs_match_oracle(self):
        # inputs occupying the whole symmetric band still convolve exactly
        g = grid(16)
        u = rand(g, 300, hi=7)
        v = rand(g, 301, hi=7)
        u.coeffs += rand(g, 302, hi=7).coeffs * 1e-1
        prod = sp.dealiased_product(u, v)
        ref = brute_force_convolution(u, v)
        assert np.max(np.abs(prod.coeffs - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_bilinear_and_symmetric(self):
        g = grid(16)
        u, v, w = rand(g, 14), rand(g, 15), rand(g, 16)
        left = sp.dealiased_product(
            SpectralField(g, 2.0 * u.coeffs + 3.0 * v.coeffs), w)
        right = SpectralField(
            g, 2.0 * sp.dealiased_product(u, w).coeffs + 3.0 * sp.dealiased_product(v, w).coeffs)
        assert np.max(np.abs(left.coeffs - right.coeffs)) <= 1e-12 * np.max(np.abs(left.coeffs))
        ab = sp.dealiased_product(u, v)
        ba = sp.dealiased_product(v, u)
        assert np.max(np.abs(ab.coeffs - ba.coeffs)) <= 1e-13 * np.max(np.abs(ab.coeffs))

    def test_grid_mismatch(self):
        u = rand(grid(16), 17)
        v = rand(grid(32), 18)
        with pytest.raises(ValueError):
            sp.dealiased_product(u, v)

    def test_hermitian_preserved(self):
        g = grid(32)
        prod = sp.dealiased_product(rand(g, 19), rand(g, 20))
        assert hermitian_defect(prod) < 1e-15


class TestNormsAndInnerProducts:
    def test_cosine_l2_norm(self):
        g = grid(32, L=3.5)
        u = sp.cosine_field(g, 1, 0, 1.0)
        assert sp.inner_product(u, u) == pytest.approx(3.5**2 / 2.0, rel=1e-14)

    def test_sobolev_zero_is_l2(self):
        g = grid(32)
        u = rand(g, 21)
        assert sp.sobolev_norm(u, 0.0) == pytest.approx(
            np.sqrt(sp.inner_product(u, u)), rel=1e-14)

    def test_cosine_h1_norm(self):
        g = grid(32, L=2 * np.pi)
        u = sp.cosine_field(g, 1, 0, 1.0)
        assert sp.sobolev_norm(u, 1.0) ** 2 == pytest.approx(4 * np.pi**2, rel=1e-14)


class TestRandomFields:
    def test_deterministic_in_seed(self):
        g = grid(32)
        a = sp.random_band_field(g, 42, 0.7, 3.0, 2, 9)
        b = sp.random_band_field(g, 42, 0.7, 3.0, 2, 9)
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_amplitude_normalization(self):
        g = grid(32)
        u = sp.random_band_field(g, 1, 0.37, 2.0, 1, 9)
        assert sp.sobolev_norm(u, 2.0) == pytest.approx(0.37, rel=1e-13)

    def test_band_limits_respected(self):
        g = grid(32)
        u = sp.random_band_field(g, 2, 1.0, 3.0, 3, 8)
        from qgk.grid import index_grids

        k1, k2 = index_grids(g)
        kk = np.hypot(k1, k2)
        outside = (kk < 3) | (kk > 8)
        assert np.all(u.coeffs[outside] == 0.0)

    def test_hermitian_exact(self):
        g = grid(48)
        u = sp.random_exponential_field(g, 3, 1.0, 0.4)
        assert hermitian_defect(u) == 0.0

    def test_nyquist_free(self):
        g = grid(16)
        u = sp.random_band_field(g, 4, 1.0, 3.0, 1, 8)
        assert np.all(u.coeffs[nyquist_mask(g)] == 0.0)


class TestOperatorAlgebra:
    def test_multipliers_commute_with_each_other(self):
        g = grid(32)
        mt = multiplier_table(g)
        u = rand(g, 30)
        ab = sp.apply_multiplier(sp.apply_multiplier(u, mt.h), mt.d)
        ba = sp.apply_multiplier(sp.apply_multiplier(u, mt.d), mt.h)
        assert np.max(np.abs(ab.coeffs - ba.coeffs)) <= 1e-14 * np.max(np.abs(u.coeffs))

    def test_composite_order_independence_with_projection(self):
        g = grid(32)
        mt = multiplier_table(g)
        u = rand(g, 31)
        orders = [
            sp.project_jn(sp.apply_multiplier(sp.apply_multiplier(u, mt.a), mt.h), 5.0),
            sp.apply_multiplier(sp.project_jn(sp.apply_multiplier(u, mt.h), 5.0), mt.a),
            sp.apply_multiplier(sp.apply_multiplier(sp.project_jn(u, 5.0), mt.a), mt.h),
        ]
        base = orders[0].coeffs
        for other in orders[1:]:
            assert np.max(np.abs(other.coeffs - base)) <= 1e-14 * np.max(np.abs(base))


def test_fft_workers_env(monkeypatch):
    monkeypatch.setenv("QGK_THREADS", "3")
    assert sp.fft_workers() == 3
    monkeypatch.setenv("QGK_THREADS", "0")
    assert sp.fft_workers() >= 1
    monkeypatch.setenv("QGK_THREADS", "junk")
    assert sp.fft_workers() == 1
