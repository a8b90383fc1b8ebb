"""Automatic-reducibility frame along an (approximately) invariant torus.

From DK = (X, Z) and the presymplectic structure one builds, pointwise on the
grid, the frame M = [X | J^{-1} Y | Z] with Y = X (X_V^T X_V)^{-1} on the
symplectic factor, the pairing matrix Q, and the reference matrix V with
Q M = V + R where R holds the Lagrangianity defect blocks.  Conjugating the
linearized dynamics by M turns it into the near-triangular cocycle

    C(theta) = M^{-1}(theta + omega) Df(K(theta)) M(theta)
             = [[I, S, 0], [0, I, 0], [0, A, I]] + O(error),

whose S (torsion) and A (kernel coupling) blocks drive the triangular solve.
M^{-1} is inverted exactly pointwise; the deviation of Q M from V is kept as a
diagnostic rather than used in an expansion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTorus
from .fourier import TorusEmbedding, padded_grid
from .geometry import PresymplecticStructure
from .models import MapFamily

COND_LIMIT = 1e12


def _tswap(a):
    return np.swapaxes(a, -1, -2)


def _max_cond(stack) -> tuple[float, tuple]:
    conds = np.linalg.cond(stack)
    idx = np.unravel_index(int(np.argmax(conds)), conds.shape)
    return float(conds[idx]), idx


def assemble_frame_matrices(K_values, DK_values, structure: PresymplecticStructure):
    """Pointwise M, Q, V (and the block ingredients) from samples of K and DK.

    Returns a dict; raises :class:`DegenerateTorus` if X_V^T X_V is not
    invertible at some grid point.
    """
    d, n = structure.d, structure.n
    X = DK_values[..., :, :d]
    Z = DK_values[..., :, d:]
    XV, XN = X[..., : 2 * d, :], X[..., 2 * d:, :]
    ZV, ZN = Z[..., : 2 * d, :], Z[..., 2 * d:, :]

    XtX = _tswap(XV) @ XV
    cond, idx = _max_cond(XtX)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DegenerateTorus("X_V^T X_V", idx, cond)
    N_field = np.linalg.inv(XtX)
    YV = XV @ N_field

    J = structure.J_at(K_values)
    Jinv = np.linalg.inv(J)
    JinvY = Jinv @ YV

    shape = K_values.shape[:-1]
    M = np.zeros(shape + (2 * d + n, 2 * d + n))
    M[..., : 2 * d, :d] = XV
    M[..., 2 * d:, :d] = XN
    M[..., : 2 * d, d: 2 * d] = JinvY
    M[..., : 2 * d, 2 * d:] = ZV
    M[..., 2 * d:, 2 * d:] = ZN

    Q = np.zeros_like(M)
    Q[..., :d, : 2 * d] = _tswap(XV) @ J
    Q[..., d: 2 * d, : 2 * d] = _tswap(JinvY) @ J
    Q[..., 2 * d:, 2 * d:] = np.eye(n)

    V = np.zeros_like(M)
    V[..., :d, d: 2 * d] = np.eye(d)
    V[..., d: 2 * d, :d] = -np.eye(d)
    V[..., d: 2 * d, d: 2 * d] = -_tswap(YV) @ Jinv @ YV
    V[..., d: 2 * d, 2 * d:] = _tswap(JinvY) @ J @ ZV
    V[..., 2 * d:, :d] = XN
    V[..., 2 * d:, 2 * d:] = ZN

    return {"M": M, "Q": Q, "V": V, "N": N_field, "YV": YV, "XV": XV, "ZV": ZV,
            "J": J, "Jinv": Jinv}


@dataclass
class ReducedFrame:
    """All grid fields of the reducibility construction for one torus."""

    K: TorusEmbedding
    omega: np.ndarray
    structure: PresymplecticStructure
    family: MapFamily
    lam: np.ndarray
    grid_shape: tuple

    K_values: np.ndarray
    DK_values: np.ndarray
    M_field: np.ndarray
    M_inv: np.ndarray
    M_inv_shift: np.ndarray       # M^{-1}(theta + omega)
    Q_field: np.ndarray
    V_field: np.ndarray
    N_field: np.ndarray
    Y_field: np.ndarray
    C_field: np.ndarray
    S: np.ndarray                 # torsion block C[:d, d:2d]
    A: np.ndarray                 # kernel coupling block C[2d:, d:2d]
    Lambda: np.ndarray            # M^{-1}(theta+omega) df/dlambda
    Lambda_vq: np.ndarray         # V^{-1}(theta) Q(theta) df/dlambda (logged alongside)
    qm_residual: float
    cond_M: float
    cond_V: float
    block_residuals: dict

    @property
    def d(self) -> int:
        return self.structure.d

    @property
    def n(self) -> int:
        return self.structure.n

    # sub-blocks of DK under the V + N splitting
    @property
    def X_V(self) -> np.ndarray:
        return self.DK_values[..., : 2 * self.d, : self.d]

    @property
    def X_N(self) -> np.ndarray:
        return self.DK_values[..., 2 * self.d:, : self.d]

    @property
    def Z_V(self) -> np.ndarray:
        return self.DK_values[..., : 2 * self.d, self.d:]

    @property
    def Z_N(self) -> np.ndarray:
        return self.DK_values[..., 2 * self.d:, self.d:]

    def grid_average(self, values: np.ndarray) -> np.ndarray:
        axes = tuple(range(len(self.grid_shape)))
        return values.mean(axis=axes)

    @property
    def avg_S(self) -> np.ndarray:
        return self.grid_average(self.S)

    @property
    def avg_Lambda(self) -> np.ndarray:
        return self.grid_average(self.Lambda)

    def response_rank(self, mask=None, rtol: float = 1e-8):
        """Rank (by singular values) of the averaged parameter response,
        restricted to the active parameter columns."""
        avg = self.avg_Lambda
        if mask is not None:
            avg = avg[:, np.asarray(mask, dtype=bool)]
        if avg.shape[1] == 0:
            return 0, 0.0
        s = np.linalg.svd(avg, compute_uv=False)
        rank = int(np.sum(s > rtol * s[0])) if s[0] > 0 else 0
        return rank, float(s.min())

    def summary(self) -> dict:
        rank, smin = self.response_rank()
        avg_S = self.avg_S
        return {
            "cond_M": self.cond_M,
            "cond_V": self.cond_V,
            "qm_residual": self.qm_residual,
            "rank_avg_lambda": rank,
            "sigma_min_avg_lambda": smin,
            "det_avg_S": float(np.linalg.det(avg_S)) if avg_S.size else 0.0,
            "max_offpattern_block": max(self.block_residuals.values()),
        }


def build_frame(K: TorusEmbedding, family: MapFamily, lam, structure: PresymplecticStructure,
                omega, grid_shape=None) -> ReducedFrame:
    """Construct the full reducibility frame for (K, f_lambda, omega).

    The frame at theta + omega is assembled from the exactly shifted K and DK
    series (no re-interpolation), then inverted pointwise.
    """
    lam = np.asarray(lam, dtype=float)
    omega = np.asarray(getattr(omega, "omega", omega), dtype=float)
    if grid_shape is None:
        grid_shape = padded_grid(K.truncation)

    K_values = K.grid_values(grid_shape)
    DK = K.jacobian()
    DK_values = DK.to_grid(grid_shape)
    here = assemble_frame_matrices(K_values, DK_values, structure)

    K_shift_values = K.shift(omega).grid_values(grid_shape)
    DK_shift_values = DK.shift(omega).to_grid(grid_shape)
    there = assemble_frame_matrices(K_shift_values, DK_shift_values, structure)

    cond_M, idx = _max_cond(here["M"])
    if not np.isfinite(cond_M) or cond_M > COND_LIMIT:
        raise DegenerateTorus("frame matrix M", idx, cond_M)
    cond_V, idx = _max_cond(here["V"])
    if not np.isfinite(cond_V) or cond_V > COND_LIMIT:
        raise DegenerateTorus("reference matrix V", idx, cond_V)

    M_inv = np.linalg.inv(here["M"])
    M_inv_shift = np.linalg.inv(there["M"])

    Df = family.df(K_values, lam)
    C = M_inv_shift @ Df @ here["M"]
    d, n = structure.d, structure.n
    S = C[..., :d, d: 2 * d]
    A = C[..., 2 * d:, d: 2 * d]

    dflam = family.dflam(K_values, lam)
    Lambda = M_inv_shift @ dflam
    Lambda_vq = np.linalg.solve(here["V"], here["Q"] @ dflam)

    qm = here["Q"] @ here["M"] - here["V"]
    eye = np.eye(2 * d + n)

    def block_norm(block):
        return float(np.abs(block).max()) if block.size else 0.0

    block_residuals = {
        "C11-I": block_norm(C[..., :d, :d] - eye[:d, :d]),
        "C21": block_norm(C[..., d: 2 * d, :d]),
        "C22-I": block_norm(C[..., d: 2 * d, d: 2 * d] - eye[:d, :d]),
        "C31": block_norm(C[..., 2 * d:, :d]),
        "C13": block_norm(C[..., :d, 2 * d:]),
        "C23": block_norm(C[..., d: 2 * d, 2 * d:]),
        "C33-I": block_norm(C[..., 2 * d:, 2 * d:] - np.eye(n)),
    }

    return ReducedFrame(
        K=K, omega=omega, structure=structure, family=family, lam=lam,
        grid_shape=tuple(grid_shape),
        K_values=K_values, DK_values=DK_values,
        M_field=here["M"], M_inv=M_inv, M_inv_shift=M_inv_shift,
        Q_field=here["Q"], V_field=here["V"],
        N_field=here["N"], Y_field=here["YV"],
        C_field=C, S=S, A=A,
        Lambda=Lambda, Lambda_vq=Lambda_vq,
        qm_residual=float(np.abs(qm).max()),
        cond_M=cond_M, cond_V=cond_V,
        block_residuals=block_residuals,
    )


def lagrangian_residual_frame(frame: ReducedFrame) -> dict:
    """The two nonzero blocks of R = Q M - V (pullback-form defects seen by the
    frame) and the norm of V^{-1} R."""
    d = frame.d
    XV = frame.DK_values[..., : 2 * d, :d]
    ZV = frame.DK_values[..., : 2 * d, d:]
    J = frame.structure.J_at(frame.K_values)
    R_xx = _tswap(XV) @ J @ XV
    R_xz = _tswap(XV) @ J @ ZV
    R = np.zeros_like(frame.V_field)
    R[..., :d, :d] = R_xx
    R[..., :d, 2 * d:] = R_xz
    VinvR = np.linalg.solve(frame.V_field, R)
    return {
        "R_xx": float(np.abs(R_xx).max()),
        "R_xz": float(np.abs(R_xz).max()) if R_xz.size else 0.0,
        "VinvR_norm": float(np.abs(VinvR).max()),
    }


def presymplectic_basis_defect(frame: ReducedFrame) -> dict:
    """Pointwise pairing identities Omega(X, J^{-1}Y) = I, Omega(X, X) = 0,
    Omega(X, Z) = 0; exact on an invariant Lagrangian torus."""
    d = frame.d
    XV = frame.DK_values[..., : 2 * d, :d]
    ZV = frame.DK_values[..., : 2 * d, d:]
    J = frame.structure.J_at(frame.K_values)
    JinvY = frame.M_field[..., : 2 * d, d: 2 * d]
    pair_XY = _tswap(XV) @ J @ JinvY - np.eye(d)
    pair_XX = _tswap(XV) @ J @ XV
    pair_XZ = _tswap(XV) @ J @ ZV
    return {
        "XY-I": float(np.abs(pair_XY).max()),
        "XX": float(np.abs(pair_XX).max()),
        "XZ": float(np.abs(pair_XZ).max()) if pair_XZ.size else 0.0,
    }
