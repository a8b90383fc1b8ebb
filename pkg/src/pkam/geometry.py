"""Exact presymplectic structure on T^d x R^d x T^n: matrix form, primitive,
pullback defect and flux.

The 2-form has rank 2d with kernel along the z-angles, so its matrix is
J_tilde = diag(J, 0) with J invertible and skew.  The default structure is the
constant J = [[0, -I], [I, 0]] with primitive alpha = sum_i y_i dx_i (so that
d(alpha) reproduces the form exactly).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fourier import FourierSeries, TorusEmbedding, padded_grid


def standard_J(d: int) -> np.ndarray:
    J = np.zeros((2 * d, 2 * d))
    J[:d, d:] = -np.eye(d)
    J[d:, :d] = np.eye(d)
    return J


def _standard_primitive(u: np.ndarray, d: int) -> np.ndarray:
    """alpha = sum_i y_i dx_i: coefficient vector a(u) with a_x = y, rest 0."""
    a = np.zeros_like(u)
    a[..., :d] = u[..., d:2 * d]
    return a


@dataclass(frozen=True)
class PresymplecticStructure:
    """Matrix J (constant, or a callable of the base point), its block
    extension J_tilde = diag(J, 0), and a primitive 1-form alpha = a(u) du."""

    d: int
    n: int
    J: np.ndarray | Callable = None
    primitive: Callable = None

    def __post_init__(self):
        if self.J is None:
            object.__setattr__(self, "J", standard_J(self.d))
        if isinstance(self.J, np.ndarray):
            if self.J.shape != (2 * self.d, 2 * self.d):
                raise ValueError(f"J must be 2d x 2d, got {self.J.shape}")
            if not np.allclose(self.J.T, -self.J, atol=1e-12):
                raise ValueError("J must be skew-symmetric")
            if abs(np.linalg.det(self.J)) < 1e-12:
                raise ValueError("J must be invertible")
        if self.primitive is None:
            d = self.d
            object.__setattr__(self, "primitive", lambda u: _standard_primitive(u, d))

    @property
    def ncomp(self) -> int:
        return 2 * self.d + self.n

    def J_at(self, u: np.ndarray) -> np.ndarray:
        """J evaluated at base points u of shape (..., 2d+n) -> (..., 2d, 2d)."""
        if callable(self.J):
            return np.asarray(self.J(u))
        return np.broadcast_to(self.J, u.shape[:-1] + self.J.shape)

    def J_tilde_at(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros(u.shape[:-1] + (self.ncomp, self.ncomp))
        out[..., : 2 * self.d, : 2 * self.d] = self.J_at(u)
        return out

    def exterior_derivative_defect(self, u: np.ndarray, step: float = 1e-6) -> float:
        """Max |d(alpha) - Omega| at the given points, by central differences.

        With A_ij = da_j/du_i the matrix of d(alpha) is A - A^T, which must
        reproduce J_tilde.
        """
        u = np.atleast_2d(np.asarray(u, dtype=float))
        m = self.ncomp
        A = np.zeros(u.shape[:-1] + (m, m))
        for i in range(m):
            h = np.zeros(m)
            h[i] = step
            A[..., i, :] = (self.primitive(u + h) - self.primitive(u - h)) / (2 * step)
        defect = A - np.swapaxes(A, -1, -2) - self.J_tilde_at(u)
        return float(np.abs(defect).max())


def lagrangian_defect(K: TorusEmbedding, structure: PresymplecticStructure, rho=None):
    """Matrix of the pullback of the form along K and its analytic norm.

    L(theta) = DK(theta)^T J_tilde(K(theta)) DK(theta); identically zero on an
    exactly invariant torus with rationally independent frequency, and of the
    order of the invariance error otherwise.
    """
    shape = padded_grid(K.truncation)
    Kv = K.grid_values(shape)
    DK = K.jacobian().to_grid(shape)
    Jt = structure.J_tilde_at(Kv)
    Lv = np.swapaxes(DK, -1, -2) @ Jt @ DK
    L = FourierSeries.from_grid(Lv, K.truncation)
    return L, L.weighted_norm(K.rho if rho is None else rho)


def flux(map_at, structure: PresymplecticStructure, reference: TorusEmbedding = None,
         npoints: int = 256) -> np.ndarray:
    """Loop integrals of f*alpha - alpha over the d+n fundamental loops.

    The zero vector (within quadrature accuracy) certifies that f is exact
    presymplectic.  ``map_at`` maps lifted points (..., 2d+n) -> (..., 2d+n).
    Integration is the trapezoid rule on the periodic loop, which is
    spectrally accurate.
    """
    d, n = structure.d, structure.n
    if reference is None:
        reference = TorusEmbedding.flat(d, n, (0,) * (d + n))
    t = np.arange(npoints) / npoints
    out = np.zeros(d + n)
    for i in range(d + n):
        theta = np.zeros((npoints, d + n))
        theta[:, i] = t
        c = reference.evaluate(theta)
        # tangent of the loop: column i of DK along the path
        DK = reference.jacobian().evaluate(theta)
        cdot = DK[..., :, i]
        fc = map_at(c)
        # winding of f o c is the induced integer vector f(u + P e_i) - f(u)
        wind = np.round(map_at(c[:1] + reference.winding[:, i]) - fc[:1])[0]
        fdot = _loop_derivative(fc, t, wind)
        integrand = np.einsum("pi,pi->p", structure.primitive(fc), fdot) - np.einsum(
            "pi,pi->p", structure.primitive(c), cdot
        )
        out[i] = integrand.mean()
    return out


def _loop_derivative(values: np.ndarray, t: np.ndarray, winding: np.ndarray) -> np.ndarray:
    """Spectral d/dt of a degree-``winding`` loop sampled at t = j/N; the
    linear part is removed before the FFT and its slope restored after."""
    npts = len(t)
    periodic = values - np.outer(t, winding)
    k = np.fft.fftfreq(npts, d=1.0 / npts)
    deriv = np.fft.ifft(
        (2j * np.pi * k)[:, None] * np.fft.fft(periodic, axis=0), axis=0
    ).real
    return deriv + winding


@dataclass(frozen=True)
class PresymplecticCheck:
    max_residual: float
    structural_norm: float
    samples: int
    passed: bool = False


def verify_presymplectic(family, lam, structure: PresymplecticStructure,
                         samples: int = 200, seed: int = 0,
                         tolerance: float = 1e-11) -> PresymplecticCheck:
    """Check Df^T J_tilde(f(u)) Df = J_tilde(u) at random sample points, plus
    the structural zero block d(x', y')/dz = 0."""
    rng = np.random.default_rng(seed)
    d, n = structure.d, structure.n
    u = rng.uniform(-1.0, 1.0, size=(samples, 2 * d + n))
    Df = family.df(u, lam)
    Jt_here = structure.J_tilde_at(u)
    Jt_image = structure.J_tilde_at(family.f(u, lam))
    residual = np.swapaxes(Df, -1, -2) @ Jt_image @ Df - Jt_here
    max_residual = float(np.abs(residual).max())
    structural = float(np.abs(Df[..., : 2 * d, 2 * d:]).max()) if n else 0.0
    return PresymplecticCheck(
        max_residual=max_residual,
        structural_norm=structural,
        samples=samples,
        passed=(max_residual <= tolerance and structural <= tolerance),
    )
