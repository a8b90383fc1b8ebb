import numpy as np
import pytest

import pkam
from pkam.errors import NotAligned
from pkam.fourier import TorusEmbedding
from pkam.models import coupled_standard_family
from pkam.uniqueness import align_phase

from conftest import GOLDEN, OMEGA_PAIR, SQRT2M1


class TestAlignPhase:
    def test_identical_tori(self, converged_run, structure):
        _, result = converged_run
        out = align_phase(result.K, result.K, structure)
        assert np.abs(out.tau).max() <= 1e-12
        assert out.residuals[-1] <= 1e-12

    def test_recovers_injected_phase(self, converged_run, structure):
        _, result = converged_run
        rng = np.random.default_rng(0)
        for _ in range(6):
            tau_star = rng.uniform(-0.01, 0.01, size=2)
            K2 = result.K.shift(tau_star)
            out = align_phase(result.K, K2, structure)
            assert np.abs(out.tau - tau_star).max() <= 1e-10

    def test_additivity_of_injected_phases(self, converged_run, structure):
        _, result = converged_run
        tau_a = np.array([0.004, -0.006])
        tau_b = np.array([-0.002, 0.007])
        K2 = result.K.shift(tau_a).shift(tau_b)
        out = align_phase(result.K, K2, structure)
        assert np.abs(out.tau - (tau_a + tau_b)).max() <= 1e-10

    def test_residual_history_non_increasing(self, converged_run, structure):
        _, result = converged_run
        K2 = result.K.shift(np.array([0.009, 0.003]))
        out = align_phase(result.K, K2, structure)
        assert all(b <= a * (1 + 1e-12) for a, b in zip(out.residuals, out.residuals[1:]))

    def test_theta_rank_reported_with_frame(self, converged_run, converged_frame, structure):
        _, result = converged_run
        K2 = result.K.shift(np.array([0.005, 0.005]))
        out = align_phase(result.K, K2, structure, frame=converged_frame)
        assert out.theta_rank == 1          # rank d for the twist family

    def test_distinct_tori_not_aligned(self, structure):
        # invariant tori of the same map at two different frequencies
        fam = coupled_standard_family(strength=0.2, coupling=0.05, drift=SQRT2M1)
        cfg = pkam.SolveConfig(max_iterations=10, target_error=1e-12, rho0=1e-3)
        K0 = TorusEmbedding.flat(1, 1, (32, 32), y0=[GOLDEN], rho=1e-3)
        r1 = pkam.solve(K0, np.zeros(3), fam, OMEGA_PAIR, structure, cfg)
        omega2 = np.array([GOLDEN + 0.04, SQRT2M1])
        K1 = TorusEmbedding.flat(1, 1, (32, 32), y0=[omega2[0]], rho=1e-3)
        r2 = pkam.solve(K1, np.zeros(3), fam, omega2, structure, cfg)
        with pytest.raises(NotAligned):
            align_phase(r1.K, r2.K, structure)

    def test_far_apart_tori_rejected_by_closeness_guard(self, converged_run, structure):
        _, result = converged_run
        K2 = result.K.shift(np.array([0.35, 0.0]))     # far outside the basin
        with pytest.raises(NotAligned):
            align_phase(result.K, K2, structure, closeness_threshold=0.25)
