"""Phase alignment of two invariant tori of the same map and frequency.

Invariant tori are unique only up to a rigid phase: K and K o T_phi solve the
same equation.  Two genuinely equal tori can therefore differ by an unknown
phase tau; this module recovers it by iterating a normalization step that
kills the averaged x- and z-frame components of the difference (the y-block is
intentionally excluded -- its average is controlled by the rank condition on
the averaged [S; A] matrix, which is monitored and reported, not assumed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotAligned, SingularResponse
from .fourier import FourierSeries, TorusEmbedding, padded_grid
from .geometry import PresymplecticStructure
from .reducibility import ReducedFrame, assemble_frame_matrices

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class AlignResult:
    tau: np.ndarray
    residuals: list = field(default_factory=list)
    rounds: int = 0
    theta_rank: int = None        # rank of avg([S; A]) when a frame is supplied


def _difference_series(K1: TorusEmbedding, K2: TorusEmbedding, tau) -> FourierSeries:
    """K1 o T_tau - K2 as a fully periodic series (the winding offset of the
    shift lands in the constant term)."""
    shifted = K1.shift(tau)
    return shifted.periodic - K2.periodic


def align_phase(K1: TorusEmbedding, K2: TorusEmbedding,
                structure: PresymplecticStructure = None,
                frame: ReducedFrame = None,
                tolerance: float = 1e-11, max_rounds: int = 30,
                closeness_threshold: float = 0.25) -> AlignResult:
    """Find tau with K1 o T_tau = K2 (so an injected phase is returned as is).

    Each round solves the (d+n) x (d+n) linear system that zeroes the averages
    of the x- and z-rows of M^{-1} applied to the current difference, using
    avg([T1; T3] DK1(theta + tau)) as the response, then shifts and repeats.
    Raises :class:`NotAligned` when the residual stalls above tolerance and
    :class:`SingularResponse` when the averaged response degenerates.
    """
    if structure is None:
        structure = PresymplecticStructure(K1.d, K1.n)
    d, n = K1.d, K1.n
    rows = np.concatenate([np.arange(d), np.arange(2 * d, 2 * d + n)])
    grid_shape = padded_grid(tuple(max(a, b) for a, b in zip(K1.truncation, K2.truncation)))

    initial = _difference_series(K1, K2, np.zeros(K1.dim)).weighted_norm(0.0)
    if initial > closeness_threshold:
        raise NotAligned(initial)

    theta_rank = None
    if frame is not None:
        SA = np.concatenate([frame.avg_S, frame.grid_average(frame.A)], axis=0)
        s = np.linalg.svd(SA, compute_uv=False)
        theta_rank = int(np.sum(s > 1e-10 * max(s[0], 1e-300)))

    DK1 = K1.jacobian()
    tau = np.zeros(K1.dim)
    residuals = [initial]
    best = (initial, tau.copy())
    grid_axes = tuple(range(len(grid_shape)))
    for round_idx in range(max_rounds):
        DK1_tau = DK1.shift(tau).to_grid(grid_shape)
        mats = assemble_frame_matrices(K1.shift(tau).grid_values(grid_shape),
                                       DK1_tau, structure)
        T13 = np.linalg.inv(mats["M"])[..., rows, :]

        diff_vals = _difference_series(K1, K2, tau).to_grid(grid_shape)
        g = (T13 @ diff_vals[..., None])[..., 0].mean(axis=grid_axes)
        response = (T13 @ DK1_tau).mean(axis=grid_axes)
        cond = np.linalg.cond(response)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise SingularResponse(
                f"averaged phase response has condition number {cond:.3e}"
            )
        tau = tau - np.linalg.solve(response, g)

        residual = _difference_series(K1, K2, tau).weighted_norm(0.0)
        residuals.append(residual)
        if residual < best[0]:
            best = (residual, tau.copy())
        if residual <= tolerance:
            return AlignResult(tau=tau, residuals=residuals, rounds=round_idx + 1,
                               theta_rank=theta_rank)
        if residual > 0.9 * residuals[-2]:
            break

    raise NotAligned(best[0])
