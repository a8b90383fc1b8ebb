"""Constant-coefficient difference equation v(theta) - v(theta + omega) = h(theta).

Solved mode by mode: v_k = h_k / (1 - e^(2*pi*i k.w)) for k != 0, v_0 = 0.
The right-hand side must have (numerically) zero average; the unique
zero-average solution is returned.
"""

from __future__ import annotations

import numpy as np

from .errors import NonzeroAverage, ResonantMode
from .fourier import FourierSeries

# denominators below this are double-precision noise; division is meaningless
RESONANCE_FLOOR = 1e-14


def remove_average(h: FourierSeries):
    """Split h into its zero-average part and its torus average."""
    return h.remove_average()


def _denominators(truncation, omega):
    if hasattr(omega, "omega"):          # a certified Frequency
        omega = omega.omega
    omega = np.asarray(omega, dtype=float)
    axes = [np.arange(-int(N), int(N) + 1) for N in truncation]
    mesh = np.meshgrid(*axes, indexing="ij")
    phase = sum(w * k for w, k in zip(omega, mesh))
    return 1.0 - np.exp(2j * np.pi * phase)


def solve_difference(
    h: FourierSeries,
    omega,
    avg_tolerance: float | None = None,
    resonance_floor: float = RESONANCE_FLOOR,
    skip_divisor: float = 0.0,
) -> FourierSeries:
    """Unique zero-average solution of v - v o T_omega = h.

    ``avg_tolerance`` bounds the admissible |avg(h)| (default 1e-10 * ||h||_l1,
    None disables the check entirely and the average is simply dropped);
    violations raise :class:`NonzeroAverage`.  A denominator smaller than
    ``resonance_floor`` raises :class:`ResonantMode`.

    ``skip_divisor`` (default off) zeroes v_k on modes whose denominator is
    below the given value instead of dividing.  Iterative callers use it to
    declare near-resonant modes unresolvable at the current truncation: their
    forcing is denominator-suppressed, while dividing by it would amplify
    content the band cannot propagate correctly.
    """
    avg = h.average()
    avg_norm = float(np.max(np.abs(avg))) if np.size(avg) else 0.0
    if avg_tolerance is not None:
        tol = avg_tolerance
        if avg_norm > tol:
            raise NonzeroAverage(avg_norm, tol)

    den = _denominators(h.truncation, omega)
    center = tuple(int(N) for N in h.truncation)
    mags = np.abs(den)
    mags[center] = np.inf
    if skip_divisor <= 0.0 and mags.min() < resonance_floor:
        bad = np.unravel_index(int(np.argmin(mags)), mags.shape)
        mode = tuple(int(i) - int(N) for i, N in zip(bad, h.truncation))
        raise ResonantMode(mode, float(mags.min()))

    den[center] = 1.0
    skipped = mags < max(skip_divisor, 0.0)
    den[skipped] = 1.0
    inv = 1.0 / den
    coeffs = h.coeffs * inv.reshape(inv.shape + (1,) * len(h.value_shape))
    coeffs[center] = 0.0
    if skipped.any():
        coeffs[skipped] = 0.0
    return FourierSeries(coeffs, h.truncation)


def default_avg_tolerance(h: FourierSeries) -> float:
    return 1e-10 * max(h.weighted_norm(0.0), 1e-300)


def difference_residual(v: FourierSeries, h: FourierSeries, omega, rho: float = 0.0) -> float:
    """Norm of v - v o T_omega - (h - avg h); an algebraic identity per mode,
    so this measures pure roundoff."""
    omega = getattr(omega, "omega", omega)
    lhs = v - v.shift(omega)
    rhs, _ = h.remove_average()
    return (lhs - rhs).weighted_norm(rho)


def per_mode_residual(v: FourierSeries, h: FourierSeries, omega) -> float:
    """Max over in-band modes k != 0 of |v_k (1 - e^(2*pi*i k.w)) - h_k|."""
    den = _denominators(h.truncation, omega)
    center = tuple(int(N) for N in h.truncation)
    res = v.coeffs * den.reshape(den.shape + (1,) * len(h.value_shape)) - h.coeffs
    res[center] = 0.0
    return float(np.abs(res).max())
