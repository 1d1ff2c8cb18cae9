"""Time stepping, exact linear flow, Galerkin cuts, twin-run stability."""

import numpy as np
import pytest

from qgk.grid import GridSpec, SpectralField, hermitian_defect, multiplier_table
from qgk import diagnostics as diag
from qgk import spectral as sp
from qgk.evolution import (
    ForcingSpec,
    RunConfig,
    SimulationAbort,
    compare_runs,
    linear_evolve,
    max_velocity,
    prepare_state,
    simulate,
    step,
    tendency,
)


G64 = GridSpec(64, 2 * np.pi)
G32 = GridSpec(32, 2 * np.pi)


def band_ic(g, seed=1, amplitude=1.0, hi=None):
    return sp.random_band_field(g, seed, amplitude, 3.0, 1, hi or g.n // 6)


def forcing_for(g, seed=9, K=0.5, eta=0.75):
    profile = sp.random_band_field(g, seed, 1.0, 3.0, 1, g.n // 6)
    return ForcingSpec(kind="separable_decaying", profile=profile, amplitude=K, eta=eta)


class TestForcingSpec:
    def test_separable_sobolev_law_exact(self):
        g = G32
        f = forcing_for(g, K=0.7, eta=0.6)
        base = sp.sobolev_norm(f.profile, 2.0)
        for t in (0.0, 1.5, 10.0):
            field = SpectralField(g, f.coefficients(t))
            assert sp.sobolev_norm(field, 2.0) == pytest.approx(
                0.7 * (1 + t) ** (-1.6) * base, rel=1e-14)

    def test_tabulated_interpolation(self):
        g = G32
        a, b = band_ic(g, 2), band_ic(g, 3)
        f = ForcingSpec(kind="tabulated", table=[(0.0, a), (2.0, b)])
        mid = f.coefficients(1.0)
        assert np.allclose(mid, 0.5 * (a.coeffs + b.coeffs))
        assert f.coefficients(5.0) is None

    def test_validation(self):
        with pytest.raises(ValueError):
            ForcingSpec(kind="separable_decaying", profile=None)
        with pytest.raises(ValueError):
            ForcingSpec(kind="nope")
        with pytest.raises(ValueError):
            ForcingSpec(kind="tabulated", table=[(0.0, band_ic(G32))])


class TestTendency:
    def test_single_mode_is_pure_decay(self):
        g = G32
        r = sp.cosine_field(g, 2, 1, 1.0)
        cfg = RunConfig(grid=g, mu=1.7, t_end=1.0, dt=0.1, initial_condition=r)
        rhs = tendency(r, 0.0, cfg)
        mt = multiplier_table(g)
        expected = -1.7 * mt.h * r.coeffs
        assert np.max(np.abs(rhs.coeffs - expected)) <= 1e-13 * np.max(np.abs(expected))

    def test_zero_state_gives_inverse_operator_forcing(self):
        g = G32
        f = forcing_for(g)
        zero = SpectralField(g, np.zeros(g.shape, complex))
        cfg = RunConfig(grid=g, mu=1.0, t_end=1.0, dt=0.1,
                        initial_condition=zero, forcing=f)
        rhs = tendency(zero, 0.3, cfg)
        mt = multiplier_table(g)
        expected = mt.d * f.coefficients(0.3)
        assert np.max(np.abs(rhs.coeffs - expected)) == 0.0

    def test_mean_mode_with_mean_free_forcing(self):
        g = G32
        r = band_ic(g, 4)
        cfg = RunConfig(grid=g, mu=1.0, t_end=1.0, dt=0.1,
                        initial_condition=r, forcing=forcing_for(g))
        rhs = tendency(r, 0.0, cfg)
        assert rhs.coeffs[0, 0] == 0.0


class TestStep:
    def test_single_mode_exact_for_any_dt(self):
        g = G64
        r0 = sp.cosine_field(g, 3, 0, 2.0)
        cfg = RunConfig(grid=g, mu=1.0, t_end=1.0, dt=0.5, initial_condition=r0)
        r = prepare_state(cfg)
        r = step(r, 0.0, cfg)
        r = step(r, 0.5, cfg)
        q = (3 * g.frequency_unit) ** 2
        h = (1 + q) * q * q / (1 + q + q * q)
        expected = np.exp(-h) * r0.coeffs
        err = np.max(np.abs(r.coeffs - expected)) / np.max(np.abs(r0.coeffs))
        assert err <= 1e-12

    def test_zero_field_stays_zero(self):
        g = G32
        zero = SpectralField(g, np.zeros(g.shape, complex))
        cfg = RunConfig(grid=g, mu=1.0, t_end=0.5, dt=0.1, initial_condition=zero)
        out = simulate(cfg)
        assert np.all(out.final.coeffs == 0.0)

    def test_inviscid_energy_error_fourth_order(self):
        # one step at dt and two at dt/2: local error contrast ~ 2^4
        g = G32
        r0 = band_ic(g, 5, amplitude=2.0)

        def drift(dt, steps):
            cfg = RunConfig(grid=g, mu=0.0, t_end=dt * steps, dt=dt,
                            initial_condition=r0, diagnostics_every=steps)
            out = simulate(cfg)
            return abs(diag.energy_second(out.final) - diag.energy_second(prepare_state(cfg)))

        e1 = drift(2e-2, 8)
        e2 = drift(1e-2, 16)
        assert e1 / e2 > 10.0  # order >= 4 allows ~16 with slack

    def test_rk2_converges_second_order(self):
        g = G32
        r0 = band_ic(g, 6, amplitude=1.0)
        ref_cfg = RunConfig(grid=g, mu=1.0, t_end=0.2, dt=1e-3, initial_condition=r0)
        ref = simulate(ref_cfg).final

        def err(dt):
            cfg = RunConfig(grid=g, mu=1.0, t_end=0.2, dt=dt,
                            initial_condition=r0, stepper="if_rk2")
            out = simulate(cfg).final
            return sp.l2_norm(SpectralField(g, out.coeffs - ref.coeffs))

        ratio = err(2e-2) / err(1e-2)
        assert 3.0 < ratio < 5.5

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_abort_on_blowup(self):
        g = G32
        r0 = band_ic(g, 7, amplitude=200.0, hi=10)
        cfg = RunConfig(grid=g, mu=0.0, t_end=50.0, dt=0.5, initial_condition=r0)
        with pytest.raises(SimulationAbort) as info:
            simulate(cfg)
        assert np.all(np.isfinite(info.value.last_good.coeffs))


class TestSimulate:
    def test_unforced_energies_non_increasing(self):
        g = G64
        cfg = RunConfig(grid=g, mu=1.0, t_end=0.5, dt=5e-3,
                        initial_condition=band_ic(g, 8, 1.5), diagnostics_every=10)
        out = simulate(cfg)
        e1 = [rec.e_first for rec in out.records]
        e2 = [rec.e_second for rec in out.records]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(e1, e1[1:]))
        assert all(b <= a * (1 + 1e-12) for a, b in zip(e2, e2[1:]))

    def test_mean_conserved_exactly(self):
        g = G32
        r0 = band_ic(g, 9)
        r0.coeffs[0, 0] = 0.25
        cfg = RunConfig(grid=g, mu=1.0, t_end=0.2, dt=5e-3,
                        initial_condition=r0, forcing=forcing_for(g))
        out = simulate(cfg)
        assert out.final.coeffs[0, 0] == 0.25

    def test_hermitian_preserved(self):
        g = G32
        cfg = RunConfig(grid=g, mu=1.0, t_end=0.2, dt=5e-3,
                        initial_condition=band_ic(g, 10), forcing=forcing_for(g))
        out = simulate(cfg)
        assert hermitian_defect(out.final) <= 1e-13 * np.max(np.abs(out.final.coeffs))

    def test_deterministic(self):
        g = G32
        cfg = RunConfig(grid=g, mu=1.0, t_end=0.1, dt=5e-3,
                        initial_condition=band_ic(g, 11), forcing=forcing_for(g))
        a = simulate(cfg).final
        b = simulate(cfg).final
        assert np.array_equal(a.coeffs, b.coeffs)

    def test_inviscid_records_warning(self):
        g = G32
        cfg = RunConfig(grid=g, mu=0.0, t_end=0.05, dt=5e-3,
                        initial_condition=band_ic(g, 12))
        out = simulate(cfg)
        assert any("inviscid" in w for w in out.warnings)

    def test_cfl_warning(self):
        g = G32
        r0 = band_ic(g, 13, amplitude=50.0, hi=8)
        dt = 10.0 * 0.5 * g.dx / max_velocity(prepare_state(
            RunConfig(grid=g, mu=1.0, t_end=1.0, dt=1.0, initial_condition=r0)))
        steps = 2
        cfg = RunConfig(grid=g, mu=1.0, t_end=steps * dt, dt=dt,
                        initial_condition=r0, diagnostics_every=1)
        try:
            out = simulate(cfg)
            assert any("CFL" in w for w in out.warnings)
        except SimulationAbort:
            pass  # blowing up this fast also proves the bound was violated

    def test_snapshot_cadence(self):
        g = G32
        cfg = RunConfig(grid=g, mu=1.0, t_end=0.2, dt=1e-2,
                        initial_condition=band_ic(g, 14),
                        diagnostics_every=5, snapshot_every=2)
        out = simulate(cfg)
        times = [t for t, _ in out.snapshots]
        assert times == pytest.approx([0.0, 0.1, 0.2])


class TestGalerkin:
    def test_projected_system_keeps_band(self):
        g = G64
        cfg = RunConfig(grid=g, mu=1.0, t_end=0.1, dt=5e-3,
                        initial_condition=band_ic(g, 15), galerkin_cut=16.0,
                        forcing=forcing_for(g))
        out = simulate(cfg)
        from qgk.grid import xi_squared

        outside = xi_squared(g) > 16.0
        assert np.all(out.final.coeffs[outside] == 0.0)

    def test_refinement_differences_shrink(self):
        # analytic datum: doubling the cut shrinks the H3 difference
        # (decay fast enough that the cubic H3 weight cannot fight it)
        g = G64
        r0 = sp.random_exponential_field(g, 16, 1.0, 1.0)

        def run(cut):
            cfg = RunConfig(grid=g, mu=1.0, t_end=0.2, dt=5e-3,
                            initial_condition=r0, galerkin_cut=cut,
                            diagnostics_every=8, snapshot_every=1)
            return simulate(cfg).snapshots

        snaps = {cut: run(cut) for cut in (9.0, 36.0, 144.0)}
        sups = []
        for lo, hi in ((9.0, 36.0), (36.0, 144.0)):
            diffs = [sp.sobolev_norm(SpectralField(g, a.coeffs - b.coeffs), 3.0)
                     for (_, a), (_, b) in zip(snaps[lo], snaps[hi])]
            sups.append(max(diffs))
        assert sups[1] < 0.5 * sups[0]

    def test_degenerate_cut_mean_only_ode(self):
        g = G32
        r0 = band_ic(g, 17)
        r0.coeffs[0, 0] = 1.0
        # mean-mode forcing via tabulated constant field
        fmean = SpectralField(g, np.zeros(g.shape, complex))
        fmean.coeffs[0, 0] = 0.5
        forcing = ForcingSpec(kind="tabulated", table=[(0.0, fmean), (10.0, fmean)])
        cut = 0.5 * g.frequency_unit ** 2  # below the lowest shell
        cfg = RunConfig(grid=g, mu=1.0, t_end=1.0, dt=0.05,
                        initial_condition=r0, galerkin_cut=cut, forcing=forcing)
        out = simulate(cfg)
        off_mean = out.final.coeffs.copy()
        off_mean[0, 0] = 0.0
        assert np.all(off_mean == 0.0)
        # d/dt c0 = f0 exactly (a(0) = 1, h(0) = 0)
        assert out.final.coeffs[0, 0] == pytest.approx(1.0 + 0.5 * 1.0, rel=1e-12)


class TestLinearEvolve:
    def test_free_flow_matches_closed_form(self):
        g = G32
        w0 = band_ic(g, 18)
        mt = multiplier_table(g)
        for t, field in linear_evolve(w0, ForcingSpec(kind="zero"), 0.8, [0.0, 0.7, 2.0]):
            expected = np.exp(-0.8 * mt.h * t) * w0.coeffs
            assert np.max(np.abs(field.coeffs - expected)) <= 1e-14 * np.max(np.abs(w0.coeffs))

    def test_constant_forcing_saturates(self):
        # constant-in-time forcing: mode tends to f0_hat / (mu h)
        g = G32
        prof = band_ic(g, 19)
        forcing = ForcingSpec(kind="tabulated", table=[(0.0, prof), (1e4, prof)])
        mt = multiplier_table(g)
        (t, field), = linear_evolve(SpectralField(g, np.zeros(g.shape, complex)),
                                    forcing, 1.0, [2e3])
        nz = np.abs(prof.coeffs) > 0
        expected = (mt.d * prof.coeffs)[nz] / mt.h[nz]
        assert np.allclose(field.coeffs[nz], expected, rtol=1e-10)

    def test_separable_forcing_against_adaptive_quadrature(self):
        g = G32
        forcing = forcing_for(g, K=0.9, eta=0.6)
        w0 = band_ic(g, 20)
        t = 3.7
        (_, field), = linear_evolve(w0, forcing, 1.3, [t])
        mt = multiplier_table(g)
        from qgk.quadrature import duhamel_time_factor_quad

        for idx in ((1, 0), (2, 3), (5, 1)):
            lam = 1.3 * mt.h[idx]
            factor = duhamel_time_factor_quad(lam, t, 0.6)
            expected = (np.exp(-lam * t) * w0.coeffs[idx]
                        + 0.9 * mt.d[idx] * forcing.profile.coeffs[idx] * factor)
            assert field.coeffs[idx] == pytest.approx(expected, rel=1e-10)

    def test_transport_disabled_run_matches_linear(self):
        g = G64
        w0 = band_ic(g, 21)
        forcing = forcing_for(g, K=0.4, eta=0.7)
        cfg = RunConfig(grid=g, mu=1.0, t_end=1.0, dt=1e-2,
                        initial_condition=w0, forcing=forcing,
                        disable_transport=True, diagnostics_every=100)
        out = simulate(cfg)
        (_, lin), = linear_evolve(w0, forcing, 1.0, [1.0])
        err = sp.l2_norm(SpectralField(g, out.final.coeffs - lin.coeffs)) / sp.l2_norm(lin)
        assert err <= 1e-10


class TestCompareRuns:
    def test_zero_perturbation(self):
        g = G32
        cfg = RunConfig(grid=g, mu=1.0, t_end=0.2, dt=1e-2,
                        initial_condition=band_ic(g, 22), diagnostics_every=5)
        zero = SpectralField(g, np.zeros(g.shape, complex))
        report = compare_runs(cfg, zero)
        assert np.all(report.e_delta == 0.0)

    def test_linear_response_to_small_perturbations(self):
        g = G32
        cfg = RunConfig(grid=g, mu=1.0, t_end=0.3, dt=5e-3,
                        initial_condition=band_ic(g, 23, 2.0), diagnostics_every=10)
        pert = band_ic(g, 24, 1e-6)
        half = SpectralField(g, 0.5 * pert.coeffs)
        full_sup = max(compare_runs(cfg, pert).delta_h3)
        half_sup = max(compare_runs(cfg, half).delta_h3)
        assert full_sup / half_sup == pytest.approx(2.0, rel=0.1)

    def test_envelope_dominates_with_order_one_constants(self):
        g = G32
        cfg = RunConfig(grid=g, mu=1.0, t_end=0.3, dt=5e-3,
                        initial_condition=band_ic(g, 25, 2.0), diagnostics_every=10)
        report = compare_runs(cfg, band_ic(g, 26, 1e-6))
        assert report.envelope_margin <= 1.0 + 1e-9
        assert report.fitted_k >= 0.0
        assert 0.0 < report.fitted_c <= 10.0
