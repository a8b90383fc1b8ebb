import numpy as np
import pytest

import pkam

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
SQRT2M1 = np.sqrt(2.0) - 1.0
OMEGA_PAIR = np.array([GOLDEN, SQRT2M1])


@pytest.fixture(scope="session")
def structure():
    return pkam.PresymplecticStructure(1, 1)


@pytest.fixture(scope="session")
def family():
    return pkam.coupled_standard_family(strength=0.3, coupling=0.1, drift=SQRT2M1)


@pytest.fixture(scope="session")
def integrable_family():
    return pkam.coupled_standard_family(strength=0.0, coupling=0.0, drift=SQRT2M1)


def run_reference_solve(truncation=(64, 64), mask=None, strength=0.3, coupling=0.1,
                        max_iterations=12, target=1e-12, use_twist_shift=False):
    fam = pkam.coupled_standard_family(strength=strength, coupling=coupling, drift=SQRT2M1)
    K0 = pkam.TorusEmbedding.flat(1, 1, truncation, y0=[GOLDEN], rho=1e-3)
    cfg = pkam.SolveConfig(max_iterations=max_iterations, target_error=target,
                           rho0=1e-3, parameter_mask=mask,
                           use_twist_shift=use_twist_shift)
    result = pkam.solve(K0, np.zeros(3), fam, OMEGA_PAIR,
                        pkam.PresymplecticStructure(1, 1), cfg)
    return fam, result


@pytest.fixture(scope="session")
def converged_run():
    """Converged perturbed torus at moderate truncation, shared by many tests."""
    return run_reference_solve()


@pytest.fixture(scope="session")
def converged_frame(converged_run, structure):
    fam, result = converged_run
    return pkam.build_frame(result.K, fam, result.lam, structure, OMEGA_PAIR)


def random_series(rng, truncation, value_shape=(), amplitude=1.0, decay=0.5):
    """Random real-valued band-limited series with geometric mode decay."""
    series = pkam.FourierSeries.zeros(truncation, value_shape)
    grid = series.to_grid()
    shape = grid.shape
    values = np.zeros(shape)
    dim = len(truncation)
    for _ in range(max(3, 2 * dim)):
        k = np.array([rng.integers(-N, N + 1) for N in truncation])
        phase = rng.uniform(0, 1)
        amp = amplitude * decay ** np.abs(k).sum() * rng.uniform(0.3, 1.0)
        theta = pkam.fourier.grid_points(shape[:dim])
        wave = amp * np.cos(2 * np.pi * (theta @ k + phase))
        values += wave.reshape(shape[:dim] + (1,) * (len(shape) - dim))
    return pkam.FourierSeries.from_grid(values, truncation)
