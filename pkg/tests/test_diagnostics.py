import numpy as np
import pytest

import pkam
from pkam.diagnostics import (nondegeneracy_report, offgrid_invariance,
                              orbit_shadow_error, twist_matrix, vanishing_average)
from pkam.fourier import TorusEmbedding
from pkam.models import coupled_standard_family, finite_difference_family
from pkam.reducibility import build_frame

from conftest import GOLDEN, OMEGA_PAIR, SQRT2M1


class TestVanishingAverage:
    def test_zero_parameter_gives_zero(self, structure, integrable_family):
        K = TorusEmbedding.flat(1, 1, (8, 8), y0=[GOLDEN], rho=1e-3)
        frame = build_frame(K, integrable_family, np.zeros(3), structure, OMEGA_PAIR)
        report = vanishing_average(frame)
        assert np.abs(report.mu_bar).max() == 0.0
        assert np.abs(report.mu_avg).max() == 0.0
        assert report.y_block_vanishes

    def test_converged_masked_run_y_block_vanishes(self, structure):
        fam = coupled_standard_family(strength=0.3, coupling=0.1, drift=SQRT2M1)
        K0 = TorusEmbedding.flat(1, 1, (32, 32), y0=[GOLDEN], rho=1e-3)
        cfg = pkam.SolveConfig(max_iterations=10, target_error=1e-12, rho0=1e-3,
                               parameter_mask=(True, False, True))
        result = pkam.solve(K0, np.zeros(3), fam, OMEGA_PAIR, structure, cfg)
        frame = build_frame(result.K, fam, result.lam, structure, OMEGA_PAIR)
        report = vanishing_average(frame, result.final_error)
        assert report.y_block_max <= 1e-9
        assert report.y_block_vanishes

    def test_y_translation_frame_expansion(self, structure, integrable_family):
        # flat torus, pure y-translation: mu_bar = (lam_y, lam_y, 0) and the
        # oracle expansion avg(M^{-1} mu_bar) has y-component of size lam_y
        lam_y = 0.013
        K = TorusEmbedding.flat(1, 1, (8, 8), y0=[GOLDEN], rho=1e-3)
        frame = build_frame(K, integrable_family, np.array([0.0, lam_y, 0.0]),
                            structure, OMEGA_PAIR)
        report = vanishing_average(frame)
        assert np.allclose(report.mu_bar, [lam_y, lam_y, 0.0], atol=1e-14)
        oracle = frame.grid_average(frame.M_inv @ report.mu_bar)
        assert np.abs(report.mu_avg - oracle).max() <= 1e-14
        assert report.y_block_max == pytest.approx(lam_y, rel=1e-12)

    def test_xz_components_need_not_vanish(self, structure, integrable_family):
        lam = np.array([0.02, 0.0, 0.01])
        K = TorusEmbedding.flat(1, 1, (8, 8), y0=[GOLDEN], rho=1e-3)
        frame = build_frame(K, integrable_family, lam, structure, OMEGA_PAIR)
        report = vanishing_average(frame)
        assert report.y_block_max <= 1e-14
        assert abs(report.mu_avg[0]) > 1e-3 and abs(report.mu_avg[2]) > 1e-3


class TestTwist:
    def test_integrable_unit_twist(self, structure, integrable_family):
        K = TorusEmbedding.flat(1, 1, (8, 8), y0=[GOLDEN], rho=1e-3)
        frame = build_frame(K, integrable_family, np.zeros(3), structure, OMEGA_PAIR)
        report = twist_matrix(frame)
        assert report.avg_S[0, 0] == pytest.approx(-1.0, abs=1e-13)
        assert abs(abs(report.determinant) - 1.0) <= 1e-13
        assert not report.singular

    def test_converged_twist_near_unit(self, converged_frame):
        report = twist_matrix(converged_frame)
        assert abs(abs(report.avg_S[0, 0]) - 1.0) <= 0.2
        assert not report.singular

    def test_shear_free_map_singular(self, structure):
        def no_twist(u, lam):
            out = u.copy()
            out[..., 2] = u[..., 2] + 0.3 + lam[0]
            return out

        fam = finite_difference_family(no_twist, 1, 1, 1)
        K = TorusEmbedding.flat(1, 1, (8, 8), y0=[GOLDEN], rho=1e-3)
        frame = build_frame(K, fam, np.zeros(1), structure, OMEGA_PAIR)
        report = twist_matrix(frame)
        assert abs(report.avg_S[0, 0]) <= 1e-9
        assert report.singular


class TestNondegeneracy:
    def test_full_translation_family_rank(self, structure, integrable_family):
        K = TorusEmbedding.flat(1, 1, (8, 8), y0=[GOLDEN], rho=1e-3)
        frame = build_frame(K, integrable_family, np.zeros(3), structure, OMEGA_PAIR)
        report = nondegeneracy_report(frame)
        assert report["rank_avg_lambda"] == 3
        assert report["sigma_min_avg_lambda"] > 0.1
        assert report["qm_residual"] <= 1e-13

    def test_masked_rank(self, converged_frame):
        rank, _ = converged_frame.response_rank(mask=[False, True, False])
        assert rank == 1

    def test_report_includes_lagrangian(self, converged_frame):
        report = nondegeneracy_report(converged_frame, lagrangian_norm=1e-11)
        assert report["lagrangian_norm"] == 1e-11
        assert report["cond_V"] < 1e3

    def test_phase_shift_invariance(self, structure, family, converged_run):
        _, result = converged_run
        frame0 = build_frame(result.K, family, result.lam, structure, OMEGA_PAIR)
        frame1 = build_frame(result.K.shift(np.array([0.2, 0.6])), family, result.lam,
                             structure, OMEGA_PAIR)
        r0, r1 = nondegeneracy_report(frame0), nondegeneracy_report(frame1)
        assert r0["rank_avg_lambda"] == r1["rank_avg_lambda"]
        assert r0["sigma_min_avg_lambda"] == pytest.approx(r1["sigma_min_avg_lambda"],
                                                           rel=1e-9)
        assert abs(twist_matrix(frame0).determinant
                   - twist_matrix(frame1).determinant) <= 1e-10


class TestIndependentOracles:
    def test_offgrid_and_shadowing(self, converged_run):
        fam, result = converged_run
        assert offgrid_invariance(result.K, fam, result.lam, OMEGA_PAIR,
                                  npoints=500, seed=7) <= 1e-10
        shadow = orbit_shadow_error(result.K, fam, result.lam, OMEGA_PAIR,
                                    theta0=np.array([0.123, 0.456]), steps=500)
        assert shadow.max() <= 1e-6

    def test_shadowing_grows_polynomially(self, converged_run):
        fam, result = converged_run
        shadow = orbit_shadow_error(result.K, fam, result.lam, OMEGA_PAIR, steps=400)
        # twist shear gives at most ~m^2 growth of the deposited error
        m = np.arange(1, 401)
        assert np.all(shadow <= 1e-12 * (1 + m) ** 2 + 1e-11)


class TestLagrangianTrend:
    def test_defect_tracks_error_on_oblique_run(self, structure, family):
        # an initial torus with genuine theta_2 dependence in the (x, y) block
        # has a genuinely nonzero pullback defect; along the Newton run the
        # fitted ratio ||L_m|| / ||e_m|| stays bounded (by a modest constant,
        # not machine noise) while both quantities vanish together
        K = TorusEmbedding.flat(1, 1, (32, 32), y0=[GOLDEN], rho=1e-3)
        amp = 1e-3
        K.periodic.coeffs[33, 33, 0] = amp / 2
        K.periodic.coeffs[31, 31, 0] = amp / 2
        K.periodic.coeffs[32, 33, 1] = amp / 2
        K.periodic.coeffs[32, 31, 1] = amp / 2
        lam = np.zeros(3)
        cfg = pkam.SolveConfig(max_iterations=8, target_error=1e-12, rho0=1e-3)
        L_history, ratios = [], []
        err = None
        for m in range(5):
            _, L_norm = pkam.lagrangian_defect(K, structure)
            err = pkam.invariance_error(K, family, lam, OMEGA_PAIR)
            e_norm = err.norm(1e-3)
            if e_norm <= 1e-12:
                break
            L_history.append(L_norm)
            ratios.append(L_norm / e_norm)
            K, lam, err, _ = pkam.kam_step(K, lam, family, OMEGA_PAIR, structure, cfg,
                                           err=err, iteration=m)
        assert len(ratios) >= 4
        assert L_history[0] > 1e-3                  # genuinely non-Lagrangian start
        assert all(r <= 100.0 for r in ratios)      # bounded fitted ratio
        assert L_history[-1] <= 1e-6 * L_history[0]  # defect died with the error
