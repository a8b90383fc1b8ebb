"""A-posteriori certification of a computed torus.

None of these checks is needed to iterate; they certify the result: the
frame-averaged translation components that must vanish for exact maps, the
twist (averaged torsion), non-degeneracy ranks, and two oracles that are
independent of the spectral solve path (off-grid invariance residual and
orbit shadowing).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fourier import TorusEmbedding
from .models import MapFamily
from .reducibility import ReducedFrame, lagrangian_residual_frame


@dataclass(frozen=True)
class VanishingReport:
    mu_bar: np.ndarray            # average of (f_lambda - f_0)(K(theta))
    mu_avg: np.ndarray            # averaged frame components of mu_bar
    y_block_max: float
    tolerance: float
    y_block_vanishes: bool


def vanishing_average(frame: ReducedFrame, error_norm: float = 0.0) -> VanishingReport:
    """Frame-averaged translation mu_bar = avg (f_lambda - f_0)(K(theta)).

    For an exact reference map f_0 (lambda = 0 in the family) and an invariant
    torus, the components conjugate to the torus tangents -- the middle d
    entries in the {X, J^{-1}Y, Z} expansion -- integrate to zero; the x- and
    z-components need not vanish.  The tolerance scales with the invariance
    error since the identity is exact only at exact invariance.
    """
    d = frame.d
    lam0 = frame.family.zero_lambda()
    diff = frame.family.f(frame.K_values, frame.lam) - frame.family.f(frame.K_values, lam0)
    mu_bar = frame.grid_average(diff)
    components = (frame.M_inv @ mu_bar)
    mu_avg = frame.grid_average(components)
    frame_norm = float(np.abs(frame.M_inv).max())
    tol = max(1e-9, 10.0 * error_norm * frame_norm)
    y_max = float(np.abs(mu_avg[d: 2 * d]).max()) if d else 0.0
    return VanishingReport(
        mu_bar=mu_bar, mu_avg=mu_avg, y_block_max=y_max,
        tolerance=tol, y_block_vanishes=bool(y_max <= tol),
    )


@dataclass(frozen=True)
class TwistReport:
    avg_S: np.ndarray
    determinant: float
    cond: float
    singular: bool


def twist_matrix(frame: ReducedFrame, cond_limit: float = 1e12) -> TwistReport:
    """Grid average of the torsion block S; its invertibility is the
    Kolmogorov twist condition that allows trading d parameters for the
    average of xi_y."""
    avg_S = frame.avg_S
    det = float(np.linalg.det(avg_S)) if avg_S.size else 0.0
    cond = float(np.linalg.cond(avg_S)) if avg_S.size else np.inf
    return TwistReport(avg_S=avg_S, determinant=det, cond=cond,
                       singular=bool(not np.isfinite(cond) or cond > cond_limit))


def nondegeneracy_report(frame: ReducedFrame, lagrangian_norm: float = None) -> dict:
    """Consolidated numbers the driver uses to fail fast."""
    rank, sigma_min = frame.response_rank()
    residual = lagrangian_residual_frame(frame)
    out = {
        "rank_avg_lambda": rank,
        "sigma_min_avg_lambda": sigma_min,
        "cond_V": frame.cond_V,
        "cond_M": frame.cond_M,
        "qm_residual": frame.qm_residual,
        "vinv_r_norm": residual["VinvR_norm"],
    }
    if lagrangian_norm is not None:
        out["lagrangian_norm"] = lagrangian_norm
    return out


def offgrid_invariance(K: TorusEmbedding, family: MapFamily, lam, omega,
                       npoints: int = 1000, seed: int = 0) -> float:
    """Sup of |f_lambda(K(theta)) - K(theta + omega)| over random off-grid
    points, in the lift metric.  Independent of the solver's grid: evaluation
    is by direct Fourier summation."""
    rng = np.random.default_rng(seed)
    lam = np.asarray(lam, dtype=float)
    omega = np.asarray(getattr(omega, "omega", omega), dtype=float)
    theta = rng.uniform(0.0, 1.0, size=(npoints, K.dim))
    values = family.f(K.evaluate(theta), lam) - K.evaluate(theta + omega)
    ang = K.angle_indices
    values[..., ang] -= np.round(values[..., ang])
    return float(np.abs(values).max())


def orbit_shadow_error(K: TorusEmbedding, family: MapFamily, lam, omega,
                       theta0=None, steps: int = 1000) -> np.ndarray:
    """|f_lambda^m(K(theta0)) - K(theta0 + m omega)| for m = 1..steps.

    The strongest available oracle: it uses only the map iteration and the
    torus evaluation, never the solver internals.
    """
    lam = np.asarray(lam, dtype=float)
    omega = np.asarray(getattr(omega, "omega", omega), dtype=float)
    theta0 = np.zeros(K.dim) if theta0 is None else np.asarray(theta0, dtype=float)
    u = K.evaluate(theta0)
    ang = K.angle_indices
    out = np.empty(steps)
    for m in range(1, steps + 1):
        u = family.f(u, lam)
        diff = u - K.evaluate(theta0 + m * omega)
        diff[ang] -= np.round(diff[ang])
        out[m - 1] = np.abs(diff).max()
    return out
