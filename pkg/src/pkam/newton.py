"""Quasi-Newton iteration for the invariance equation f_lambda(K) = K o T_omega.

One step: evaluate the error e = f_lambda(K(theta)) - K(theta + omega), build
the reducibility frame, transform the linearized equation by Delta = M xi into
the near-triangular constant-coefficient system

    [[I, S, 0], [0, I, 0], [0, A, I]] xi(theta) - xi(theta + omega) = eta - Lambda eps,

with eta = -M^{-1}(theta + omega) e, pick the parameter correction eps so the
averaged right-hand sides vanish, solve the three difference equations, and
update K <- K + M xi, lambda <- lambda + eps.  The quadratic error contraction
makes the error norms square from step to step until the roundoff floor.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import cohomology
from .diophantine import Frequency, divisor_floor
from .errors import DomainEscape, NoConvergence, NonzeroAverage, RankDeficient, StepRejected
from .fourier import FourierSeries, TorusEmbedding, band_mask, padded_grid
from .geometry import PresymplecticStructure
from .models import MapFamily
from .reducibility import ReducedFrame, build_frame


@dataclass(frozen=True)
class SolveConfig:
    """Knobs of the iteration driver.

    ``rho0`` is the initial analyticity width used by the reporting norms; the
    strip shrinks as rho_m = rho_{m-1} - 2^{-(m-1)} delta0, which keeps a
    positive limit width rho0 - 2 delta0.  The strip loss is bookkeeping for
    the norms only -- the grid is fixed and the spectral tail plays the role of
    the lost-strip error, triggering truncation growth when it exceeds
    ``tail_threshold`` times the current error norm.
    """

    max_iterations: int = 20
    target_error: float = 1e-12
    rho0: float = 1e-3
    delta0: float = None
    avg_tolerance: float = 1e-9
    parameter_mask: tuple = None          # None = all parameters active
    use_twist_shift: bool = False         # absorb x-averages into avg(xi_y)
    damping: bool = True
    max_halvings: int = 5
    grow_truncation: bool = False
    max_truncation: tuple = None
    tail_threshold: float = 1e-3
    update_band_fraction: float = 0.75
    divisor_skip: float = 1e-4
    scan_radius: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.target_error <= 1e-14:
            raise ValueError(f"target error {self.target_error} is below the 1e-14 floor guard")
        if self.delta0 is None:
            object.__setattr__(self, "delta0", self.rho0 / 4.0)
        if self.delta0 >= self.rho0 / 2.0:
            raise ValueError("delta0 must be < rho0/2 so the strip never vanishes")

    def rho_at(self, iteration: int) -> float:
        """Strip width after ``iteration`` completed steps."""
        lost = self.delta0 * sum(2.0 ** (-m) for m in range(iteration))
        return self.rho0 - lost

    def active_mask(self, m: int) -> np.ndarray:
        if self.parameter_mask is None:
            return np.ones(m, dtype=bool)
        mask = np.asarray(self.parameter_mask, dtype=bool)
        if mask.shape != (m,):
            raise ValueError(f"parameter mask length {mask.shape} != m = {m}")
        return mask


@dataclass(frozen=True)
class ErrorData:
    """Invariance error on the padded grid together with its truncated series."""

    values: np.ndarray
    series: FourierSeries
    grid_sup: float

    def norm(self, rho: float) -> float:
        return self.series.weighted_norm(rho)


def invariance_error(K: TorusEmbedding, family: MapFamily, lam, omega,
                     grid_shape=None) -> ErrorData:
    """e(theta) = f_lambda(K(theta)) - K(theta + omega) on the padded grid.

    Angle components are taken in the nearest lift: e must be small and
    continuous, not mod 1.  Raises :class:`DomainEscape` if the torus leaves
    the family's declared y-domain.
    """
    lam = np.asarray(lam, dtype=float)
    omega = np.asarray(getattr(omega, "omega", omega), dtype=float)
    if grid_shape is None:
        grid_shape = padded_grid(K.truncation)
    K_values = K.grid_values(grid_shape)
    y = K_values[..., K.d: 2 * K.d]
    lo, hi = family.y_domain
    if y.size and (y.min() < lo or y.max() > hi):
        raise DomainEscape(
            f"torus y-range [{y.min():.3g}, {y.max():.3g}] leaves declared domain "
            f"[{lo:.3g}, {hi:.3g}]"
        )
    values = family.f(K_values, lam) - K.shift(omega).grid_values(grid_shape)
    ang = K.angle_indices
    values[..., ang] -= np.round(values[..., ang])
    series = FourierSeries.from_grid(values, K.truncation)
    return ErrorData(values=values, series=series,
                     grid_sup=float(np.abs(values).max()))


@dataclass(frozen=True)
class LinearSolveInfo:
    eps: np.ndarray
    twist_shift: np.ndarray
    avg_residuals: dict
    response_cond: float
    unknowns: int


def solve_linearized(frame: ReducedFrame, e_values: np.ndarray,
                     config: SolveConfig) -> tuple[FourierSeries, np.ndarray, LinearSolveInfo]:
    """Solve the transformed triangular system for (xi, eps).

    Because Lambda(theta) is theta-dependent, xi_y depends on eps; the solver
    computes the zero-average y-solution for the eps-free right side and for
    each active parameter column, then assembles the (2d+n) x unknowns linear
    response system for eps (and, optionally, for a constant shift of
    avg(xi_y) when the twist matrix is used in place of masked parameters).
    The system is solved exactly when square, in the least-squares sense
    otherwise; leftover averages are removed before each difference solve and
    reported.
    """
    d, n = frame.d, frame.n
    m = frame.family.m
    trunc = frame.K.truncation
    omega = frame.omega
    mask = config.active_mask(m)
    active = np.flatnonzero(mask)

    eta_values = -(frame.M_inv_shift @ e_values[..., None])[..., 0]
    eta = FourierSeries.from_grid(eta_values, trunc)
    Lam = FourierSeries.from_grid(frame.Lambda, trunc)
    avg_eta = eta.average()
    avg_Lam = Lam.average()

    sl_x, sl_y, sl_z = slice(0, d), slice(d, 2 * d), slice(2 * d, 2 * d + n)

    def zero_avg_solve(series):
        centered, _ = series.remove_average()
        return cohomology.solve_difference(centered, omega, avg_tolerance=None,
                                           skip_divisor=config.divisor_skip)

    xi_y0 = zero_avg_solve(eta.component((sl_y,)))
    xi_y0_grid = xi_y0.to_grid(frame.grid_shape)
    xi_y_col_grids = [
        zero_avg_solve(Lam.component((sl_y, int(j)))).to_grid(frame.grid_shape)
        for j in active
    ]

    def avg_product(block, vec_grid):
        # grid average of block(theta) @ vec(theta); block is (..., p, d)
        return frame.grid_average((block @ vec_grid[..., None])[..., 0])

    rows = 2 * d + n
    n_eps = len(active)
    n_unknown = n_eps + (d if config.use_twist_shift else 0)
    A = np.zeros((rows, n_unknown))
    for col, (j, grid) in enumerate(zip(active, xi_y_col_grids)):
        A[sl_x, col] = avg_Lam[sl_x, j] - avg_product(frame.S, grid)
        A[sl_y, col] = avg_Lam[sl_y, j]
        A[sl_z, col] = avg_Lam[sl_z, j] - avg_product(frame.A, grid)
    if config.use_twist_shift:
        A[sl_x, n_eps:] = frame.avg_S
        A[sl_z, n_eps:] = frame.grid_average(frame.A)
    b = np.concatenate([
        avg_eta[sl_x] - avg_product(frame.S, xi_y0_grid),
        avg_eta[sl_y],
        avg_eta[sl_z] - avg_product(frame.A, xi_y0_grid),
    ])

    if n_unknown:
        sol, _, rank, sv = np.linalg.lstsq(A, b, rcond=None)
        if rank < n_unknown:
            raise RankDeficient(rank, n_unknown)
        response_cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    else:
        sol, response_cond = np.zeros(0), 1.0

    eps = np.zeros(m)
    eps[active] = sol[:n_eps]
    shift = sol[n_eps:] if config.use_twist_shift else np.zeros(d)

    # final right-hand sides with the solved eps substituted
    R_values = eta_values - (frame.Lambda @ eps)
    avg_residuals = {}
    square = n_unknown == rows

    def solve_block(values, key):
        series = FourierSeries.from_grid(values, trunc)
        centered, avg = series.remove_average()
        avg_residuals[key] = float(np.abs(avg).max()) if avg.size else 0.0
        if square and avg_residuals[key] > config.avg_tolerance:
            raise NonzeroAverage(avg_residuals[key], config.avg_tolerance)
        return cohomology.solve_difference(centered, omega, avg_tolerance=None,
                                           skip_divisor=config.divisor_skip)

    xi_y = solve_block(R_values[..., sl_y], "y")
    if config.use_twist_shift:
        xi_y.coeffs[tuple(N for N in trunc)] += shift
    xi_y_grid = xi_y.to_grid(frame.grid_shape)

    xi_x = solve_block(
        R_values[..., sl_x] - (frame.S @ xi_y_grid[..., None])[..., 0], "x")
    xi_z = solve_block(
        R_values[..., sl_z] - (frame.A @ xi_y_grid[..., None])[..., 0], "z")

    coeffs = np.zeros(eta.mode_shape + (rows,), dtype=complex)
    coeffs[..., sl_x] = xi_x.coeffs
    coeffs[..., sl_y] = xi_y.coeffs
    coeffs[..., sl_z] = xi_z.coeffs
    xi = FourierSeries(coeffs, trunc)
    info = LinearSolveInfo(eps=eps, twist_shift=shift, avg_residuals=avg_residuals,
                           response_cond=response_cond, unknowns=n_unknown)
    return xi, eps, info


@dataclass
class StepReport:
    iteration: int
    error_before: float
    error_after: float
    grid_sup_after: float
    delta_norm: float
    ddelta_norm: float
    eps_norm: float
    divisor_floor: float
    frame_summary: dict
    avg_residuals: dict
    lagrangian_norm: float        # of the pre-step torus, at the pre-step strip
    dk_sup: float
    tail_ratio: float
    halvings: int
    accepted: bool
    wall_time: float


def kam_step(K: TorusEmbedding, lam, family: MapFamily, omega,
             structure: PresymplecticStructure, config: SolveConfig,
             err: ErrorData = None, rho_before: float = None,
             rho_after: float = None, iteration: int = 0):
    """One damped quasi-Newton step.

    Returns (K', lambda', err', report).  The acceptance comparison uses the
    post-step strip width for both norms; with damping disabled the full step
    is taken unconditionally.
    """
    start = time.perf_counter()
    lam = np.asarray(lam, dtype=float)
    omega = np.asarray(getattr(omega, "omega", omega), dtype=float)
    rho_before = config.rho0 if rho_before is None else rho_before
    rho_after = rho_before if rho_after is None else rho_after
    grid_shape = padded_grid(K.truncation)

    if err is None:
        err = invariance_error(K, family, lam, omega, grid_shape)
    frame = build_frame(K, family, lam, structure, omega, grid_shape)
    xi, eps, info = solve_linearized(frame, err.values, config)

    xi_grid = xi.to_grid(grid_shape)
    delta_values = (frame.M_field @ xi_grid[..., None])[..., 0]
    delta = FourierSeries.from_grid(delta_values, K.truncation)
    if config.update_band_fraction < 1.0:
        # modes in the outer shell couple outside the representable band; a
        # near-edge small divisor there turns roundoff into a growing spike
        delta.coeffs[~band_mask(K.truncation, config.update_band_fraction)] = 0.0

    reference = err.series.weighted_norm(rho_after)
    step, halvings = 1.0, 0
    while True:
        K_new = K.translate(delta * step)
        lam_new = lam + step * eps
        try:
            err_new = invariance_error(K_new, family, lam_new, omega, grid_shape)
            norm_new = err_new.norm(rho_after)
            worse = config.damping and not (norm_new < reference or norm_new <= 1e-15)
        except DomainEscape:
            if not config.damping:
                raise
            worse = True
        if not worse:
            break
        halvings += 1
        step *= 0.5
        if halvings > config.max_halvings:
            raise StepRejected(
                f"error did not decrease after {config.max_halvings} halvings "
                f"from {reference:.3e}"
            )

    ddelta_norm = max(
        (delta * step).derivative(axis).weighted_norm(rho_after) for axis in range(K.dim)
    )
    Jt = structure.J_tilde_at(frame.K_values)
    L_values = np.swapaxes(frame.DK_values, -1, -2) @ Jt @ frame.DK_values
    lagrangian_norm = FourierSeries.from_grid(L_values, K.truncation).weighted_norm(rho_before)
    report = StepReport(
        iteration=iteration,
        error_before=err.norm(rho_before),
        error_after=err_new.norm(rho_after),
        grid_sup_after=err_new.grid_sup,
        delta_norm=(delta * step).weighted_norm(rho_after),
        ddelta_norm=ddelta_norm,
        eps_norm=float(np.abs(step * eps).max()) if eps.size else 0.0,
        divisor_floor=divisor_floor(omega, K.truncation),
        frame_summary=frame.summary(),
        avg_residuals=info.avg_residuals,
        lagrangian_norm=lagrangian_norm,
        dk_sup=float(np.abs(frame.DK_values).max()),
        tail_ratio=float(err_new.series.tail_ratio().max()),
        halvings=halvings,
        accepted=True,
        wall_time=time.perf_counter() - start,
    )
    return K_new, lam_new, err_new, report


@dataclass
class SolveResult:
    K: TorusEmbedding
    lam: np.ndarray
    converged: bool
    iterations: int
    final_error: float
    final_grid_sup: float
    reports: list = field(default_factory=list)
    rho_history: list = field(default_factory=list)
    smallness_indicator: float = np.nan
    frequency: Frequency = None

    def error_history(self) -> np.ndarray:
        return np.array([r.error_after for r in self.reports])


def solve(K0: TorusEmbedding, lam0, family: MapFamily, omega,
          structure: PresymplecticStructure = None,
          config: SolveConfig = None) -> SolveResult:
    """Iterate kam_step until the error norm reaches the target.

    ``omega`` may be a plain vector or a certified :class:`Frequency`.  Raises
    :class:`NoConvergence` (with the best iterate attached) when the budget is
    exhausted or a step is rejected.
    """
    config = config or SolveConfig()
    structure = structure or PresymplecticStructure(family.d, family.n)
    if isinstance(omega, Frequency):
        freq = omega
    else:
        freq = Frequency.certify(omega, sigma=float(family.d + family.n),
                                 scan_radius=config.scan_radius)
    w = freq.omega

    K, lam = K0, np.asarray(lam0, dtype=float)
    err = invariance_error(K, family, lam, w)
    indicator = freq.gamma_estimate ** (-4) * config.delta0 ** (-4 * freq.sigma) * err.norm(config.rho0)

    reports, rho_history = [], [config.rho0]
    best = (err.norm(config.rho0), K, lam, err)
    for m in range(config.max_iterations):
        rho_m = config.rho_at(m)
        norm_m = err.norm(rho_m)
        if norm_m <= config.target_error:
            return SolveResult(
                K=K, lam=lam, converged=True, iterations=m,
                final_error=norm_m, final_grid_sup=err.grid_sup,
                reports=reports, rho_history=rho_history,
                smallness_indicator=indicator, frequency=freq,
            )
        K, err, _ = _maybe_grow_truncation(K, err, norm_m, family, lam, w, config)
        rho_next = config.rho_at(m + 1)
        try:
            K, lam, err, report = kam_step(
                K, lam, family, w, structure, config,
                err=err, rho_before=rho_m, rho_after=rho_next, iteration=m,
            )
        except StepRejected as exc:
            # a stall can be a truncation floor: refine once and retry
            K, err, grew = _maybe_grow_truncation(K, err, norm_m, family, lam, w, config)
            if grew:
                continue
            result = _partial_result(best, reports, rho_history, indicator, freq)
            raise NoConvergence(f"step {m} rejected: {exc}", result) from exc
        reports.append(report)
        rho_history.append(rho_next)
        if report.error_after < best[0]:
            best = (report.error_after, K, lam, err)

    rho_end = config.rho_at(config.max_iterations)
    norm_end = err.norm(rho_end)
    if norm_end <= config.target_error:
        return SolveResult(
            K=K, lam=lam, converged=True, iterations=config.max_iterations,
            final_error=norm_end, final_grid_sup=err.grid_sup,
            reports=reports, rho_history=rho_history,
            smallness_indicator=indicator, frequency=freq,
        )
    result = _partial_result(best, reports, rho_history, indicator, freq)
    raise NoConvergence(
        f"no convergence after {config.max_iterations} iterations "
        f"(best error {best[0]:.3e}, target {config.target_error:.3e})",
        result,
    )


def _partial_result(best, reports, rho_history, indicator, freq) -> SolveResult:
    norm, K, lam, err = best
    return SolveResult(
        K=K, lam=lam, converged=False, iterations=len(reports),
        final_error=norm, final_grid_sup=err.grid_sup,
        reports=reports, rho_history=rho_history,
        smallness_indicator=indicator, frequency=freq,
    )


def _maybe_grow_truncation(K, err, err_norm, family, lam, omega, config):
    """Double the truncation on axes whose outer-quarter spectral tail of the
    error exceeds the configured fraction of the current error norm.

    The error's tail is the unresolved content (the update is band-restricted,
    so the torus spectrum itself cannot press against the edge)."""
    if not config.grow_truncation:
        return K, err, False
    tails = err.series.tail_ratio()
    new_trunc = list(K.truncation)
    cap = config.max_truncation or tuple(4 * N for N in K.truncation)
    grew = False
    for axis, ratio in enumerate(tails):
        if ratio > config.tail_threshold * err_norm and 2 * new_trunc[axis] <= cap[axis]:
            new_trunc[axis] *= 2
            grew = True
    if not grew:
        return K, err, False
    K = K.with_truncation(tuple(new_trunc))
    return K, invariance_error(K, family, lam, omega), True


@dataclass
class ContinuationStage:
    knob: float
    result: SolveResult
    converged: bool


def continue_in_parameter(make_family, knob_values, K0: TorusEmbedding, lam0,
                          omega, structure: PresymplecticStructure = None,
                          config: SolveConfig = None) -> list:
    """Solve along a schedule of family knob values, seeding each stage with
    the previous converged torus; stops at the first failure."""
    stages = []
    K, lam = K0, np.asarray(lam0, dtype=float)
    for value in knob_values:
        family = make_family(value)
        try:
            result = solve(K, lam, family, omega, structure, config)
        except NoConvergence as exc:
            stages.append(ContinuationStage(knob=float(value), result=exc.result,
                                            converged=False))
            break
        stages.append(ContinuationStage(knob=float(value), result=result, converged=True))
        K, lam = result.K, result.lam
    return stages
