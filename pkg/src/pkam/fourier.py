"""Truncated Fourier series on the torus and the embeddings built from them.

Conventions used throughout the package:

* maps are 1-periodic in every angle, so mode k contributes e^(2*pi*i k.theta);
* a series with per-axis truncation N stores modes k in [-N, N]^rank as a
  centered complex array of shape (2N_1+1, ..., 2N_r+1, *value_shape);
* grid values live on the uniform product grid theta_j = j / G, with G even
  and at least 2N+2 points per axis (aliasing margin);
* an embedding of the (d+n)-torus into T^d x R^d x T^n is a fixed degree-one
  winding of the angle coordinates plus a periodic part stored as a series.

Every operation returns a fresh value; series are treated as immutable after
construction and are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch

TWO_PI = 2.0 * np.pi

# exp() overflows just above 709; weights past this are meaningless in binary64
_MAX_LOG_WEIGHT = 700.0


def _next_even_regular(n: int) -> int:
    """Smallest even integer >= n whose prime factors are all in {2, 3, 5}."""
    n = max(int(n), 2)
    while True:
        m = n
        for p in (2, 3, 5):
            while m % p == 0:
                m //= p
        if m == 1 and n % 2 == 0:
            return n
        n += 1


def minimal_grid(truncation) -> tuple[int, ...]:
    """Smallest admissible grid for a truncation: even, >= 2N+2 per axis."""
    return tuple(_next_even_regular(2 * int(N) + 2) for N in truncation)


def padded_grid(truncation) -> tuple[int, ...]:
    """Grid padded past 3/2 of the Nyquist band, so quadratic products are
    alias-free after re-truncation (G >= 3N+2 per axis)."""
    return tuple(_next_even_regular(3 * int(N) + 2) for N in truncation)


def grid_points(shape) -> np.ndarray:
    """Uniform grid theta_j = j/G as an array of shape (*shape, rank)."""
    axes = [np.arange(G) / G for G in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def _mode_range(N: int) -> np.ndarray:
    return np.arange(-N, N + 1)


@dataclass(frozen=True)
class FourierSeries:
    """Truncated Fourier series of a (possibly matrix-valued) periodic map.

    ``coeffs[i_1, ..., i_r, ...]`` is the coefficient of mode
    ``k_a = i_a - N_a``; trailing axes are value components.
    """

    coeffs: np.ndarray
    truncation: tuple[int, ...]

    def __post_init__(self):
        trunc = tuple(int(N) for N in self.truncation)
        object.__setattr__(self, "truncation", trunc)
        expected = tuple(2 * N + 1 for N in trunc)
        if self.coeffs.shape[: len(trunc)] != expected:
            raise DimensionMismatch(
                f"coefficient block {self.coeffs.shape[:len(trunc)]} does not match "
                f"truncation {trunc}"
            )

    # -- structure ---------------------------------------------------------

    @property
    def rank(self) -> int:
        return len(self.truncation)

    @property
    def value_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[self.rank:]

    @property
    def mode_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[: self.rank]

    @classmethod
    def zeros(cls, truncation, value_shape=()) -> "FourierSeries":
        shape = tuple(2 * int(N) + 1 for N in truncation) + tuple(value_shape)
        return cls(np.zeros(shape, dtype=complex), tuple(truncation))

    def copy(self) -> "FourierSeries":
        return replace(self, coeffs=self.coeffs.copy())

    def component(self, index) -> "FourierSeries":
        """Slice the value axes (mode axes untouched)."""
        sl = (slice(None),) * self.rank
        idx = index if isinstance(index, tuple) else (index,)
        return FourierSeries(self.coeffs[sl + idx], self.truncation)

    # -- transforms --------------------------------------------------------

    @classmethod
    def from_grid(cls, values, truncation) -> "FourierSeries":
        """Analyze real grid values (shape (*grid, *value_shape)) into the band."""
        truncation = tuple(int(N) for N in truncation)
        rank = len(truncation)
        grid = values.shape[:rank]
        for G, N in zip(grid, truncation):
            if G < 2 * N + 1:
                raise DimensionMismatch(f"grid {grid} cannot resolve truncation {truncation}")
        spec = np.fft.fftn(values, axes=tuple(range(rank))) / float(np.prod(grid))
        for axis, (G, N) in enumerate(zip(grid, truncation)):
            spec = np.take(spec, _mode_range(N) % G, axis=axis)
        # enforce exact Hermitian symmetry (real-valued map); the FFT of real
        # data is Hermitian only to roundoff, which would break bitwise
        # persistence round trips
        flipped = np.conj(np.flip(spec, axis=tuple(range(rank))))
        return cls(0.5 * (spec + flipped), truncation)

    def to_grid(self, shape=None) -> np.ndarray:
        """Synthesize real values on a uniform grid (defaults to the minimal one)."""
        if shape is None:
            shape = minimal_grid(self.truncation)
        shape = tuple(int(G) for G in shape)
        target = np.zeros(shape + self.value_shape, dtype=complex)
        wrapped = [(_mode_range(N) % G) for N, G in zip(self.truncation, shape)]
        target[np.ix_(*wrapped)] = self.coeffs
        values = np.fft.ifftn(target, axes=tuple(range(self.rank))) * float(np.prod(shape))
        return values.real

    def evaluate(self, theta) -> np.ndarray:
        """Direct summation sum_k c_k e^(2*pi*i k.theta) at arbitrary points.

        ``theta`` has shape (..., rank); intended for off-grid probes, not for
        bulk synthesis (use :meth:`to_grid` for that).
        """
        theta = np.asarray(theta, dtype=float)
        single = theta.ndim == 1
        pts = np.atleast_2d(theta)
        modes = np.stack(
            np.meshgrid(*[_mode_range(N) for N in self.truncation], indexing="ij"), axis=-1
        ).reshape(-1, self.rank)
        flat = self.coeffs.reshape(len(modes), -1)
        out = np.empty((len(pts),) + (flat.shape[1],), dtype=complex)
        chunk = max(1, int(2e6) // max(len(modes), 1))
        for start in range(0, len(pts), chunk):
            block = pts[start:start + chunk]
            phases = np.exp(2j * np.pi * (block @ modes.T))
            out[start:start + chunk] = phases @ flat
        out = out.real.reshape(pts.shape[:-1] + self.value_shape)
        return out[0] if single else out

    # -- exact spectral operations ------------------------------------------

    def shift(self, omega) -> "FourierSeries":
        """Composition with the rigid rotation theta -> theta + omega."""
        omega = np.asarray(omega, dtype=float)
        out = self.coeffs.copy()
        for axis, N in enumerate(self.truncation):
            phase = np.exp(2j * np.pi * _mode_range(N) * omega[axis])
            out *= phase.reshape((1,) * axis + (-1,) + (1,) * (out.ndim - axis - 1))
        return FourierSeries(out, self.truncation)

    def derivative(self, axis: int) -> "FourierSeries":
        k = _mode_range(self.truncation[axis])
        factor = (2j * np.pi * k).reshape(
            (1,) * axis + (-1,) + (1,) * (self.coeffs.ndim - axis - 1)
        )
        return FourierSeries(self.coeffs * factor, self.truncation)

    def average(self) -> np.ndarray:
        """Torus average = center coefficient (real part)."""
        center = tuple(N for N in self.truncation)
        return np.real(self.coeffs[center]).copy()

    def remove_average(self) -> tuple["FourierSeries", np.ndarray]:
        avg = self.average()
        out = self.coeffs.copy()
        out[tuple(N for N in self.truncation)] -= avg
        return FourierSeries(out, self.truncation), avg

    def pad_truncation(self, truncation) -> "FourierSeries":
        """Embed into a larger band (new modes zero) or re-truncate to a smaller one."""
        truncation = tuple(int(N) for N in truncation)
        out = self.coeffs
        for axis, (old, new) in enumerate(zip(self.truncation, truncation)):
            if new == old:
                continue
            if new < old:
                sl = [slice(None)] * out.ndim
                sl[axis] = slice(old - new, old + new + 1)
                out = out[tuple(sl)].copy()     # no view into the parent buffer
            else:
                pad = [(0, 0)] * out.ndim
                pad[axis] = (new - old, new - old)
                out = np.pad(out, pad)
        return FourierSeries(out, truncation)

    # -- norms and diagnostics ----------------------------------------------

    def mode_l1(self) -> np.ndarray:
        """|k|_1 over the mode lattice, shaped like the mode block."""
        total = np.zeros(self.mode_shape)
        for axis, N in enumerate(self.truncation):
            k = np.abs(_mode_range(N)).reshape(
                (1,) * axis + (-1,) + (1,) * (self.rank - axis - 1)
            )
            total = total + k
        return total

    def weighted_norm(self, rho: float) -> float:
        """Weighted-l1 norm sum_k |c_k| e^(2*pi*rho*|k|_1), maximized over
        value components.  Upper bound for the sup of the map on the complex
        strip of width rho."""
        if rho < 0:
            raise ValueError(f"strip width must be nonnegative, got {rho}")
        exponent = TWO_PI * rho * self.mode_l1()
        if exponent.size and exponent.max() > _MAX_LOG_WEIGHT:
            raise OverflowError(
                f"analytic weight e^{exponent.max():.1f} exceeds double range "
                f"(rho={rho}, truncation={self.truncation})"
            )
        weights = np.exp(exponent)
        mags = np.abs(self.coeffs).reshape(self.mode_shape + (-1,))
        axes = list(range(self.rank))
        per_component = np.tensordot(weights, mags, axes=(axes, axes))
        return float(per_component.max()) if per_component.size else 0.0

    def grid_sup(self, shape=None) -> float:
        values = self.to_grid(shape)
        return float(np.abs(values).max()) if values.size else 0.0

    def tail_ratio(self) -> np.ndarray:
        """Per-axis energy fraction carried by the outermost quarter band."""
        energy = np.abs(self.coeffs.reshape(self.mode_shape + (-1,))) ** 2
        energy = energy.sum(axis=-1)
        total = energy.sum()
        if total == 0.0:
            return np.zeros(self.rank)
        out = np.empty(self.rank)
        for axis, N in enumerate(self.truncation):
            mask = np.abs(_mode_range(N)) > 0.75 * N
            sl = np.compress(mask, energy, axis=axis)
            out[axis] = sl.sum() / total
        return out

    def hermitian_defect(self) -> float:
        """Max |c(-k) - conj(c(k))|; zero for series of real-valued maps."""
        flipped = np.flip(self.coeffs, axis=tuple(range(self.rank)))
        return float(np.abs(flipped - np.conj(self.coeffs)).max())

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other: "FourierSeries") -> "FourierSeries":
        a, b = _common_band(self, other)
        return FourierSeries(a.coeffs + b.coeffs, a.truncation)

    def __sub__(self, other: "FourierSeries") -> "FourierSeries":
        a, b = _common_band(self, other)
        return FourierSeries(a.coeffs - b.coeffs, a.truncation)

    def __mul__(self, scalar) -> "FourierSeries":
        return FourierSeries(self.coeffs * scalar, self.truncation)

    __rmul__ = __mul__


def _common_band(a: FourierSeries, b: FourierSeries):
    if a.truncation == b.truncation:
        return a, b
    joint = tuple(max(x, y) for x, y in zip(a.truncation, b.truncation))
    return a.pad_truncation(joint), b.pad_truncation(joint)


def grid_product(a: FourierSeries, b: FourierSeries, pad: bool = True) -> FourierSeries:
    """Pointwise product of two series, computed on a physical grid.

    Matrix-valued factors are combined with ``matmul`` on the trailing axes,
    scalars elementwise.  With ``pad=True`` the grid is padded past 3/2 of the
    Nyquist band before re-truncation, which removes quadratic aliasing; the
    unpadded variant exists to demonstrate the aliasing it would incur.
    """
    a2, b2 = _common_band(a, b)
    shape = padded_grid(a2.truncation) if pad else minimal_grid(a2.truncation)
    va, vb = a2.to_grid(shape), b2.to_grid(shape)
    if len(a2.value_shape) >= 2 and len(b2.value_shape) >= 1:
        values = np.matmul(va, vb if len(b2.value_shape) >= 2 else vb[..., None])
        if len(b2.value_shape) == 1:
            values = values[..., 0]
    else:
        values = va * vb
    return FourierSeries.from_grid(values, a2.truncation)


def grid_compose(fun, K: "TorusEmbedding", pad: bool = True) -> FourierSeries:
    """Series of theta -> fun(K(theta)), evaluated pointwise on a padded grid.

    ``fun`` maps lifted points (..., 2d+n) to any value shape; the result is
    re-truncated to K's band.  Only meaningful when the composition is itself
    periodic (e.g. maps commuting with the deck translations, observables).
    """
    shape = padded_grid(K.truncation) if pad else minimal_grid(K.truncation)
    values = np.asarray(fun(K.grid_values(shape)))
    return FourierSeries.from_grid(values, K.truncation)


def band_mask(truncation, fraction: float) -> np.ndarray:
    """Boolean mask over the mode lattice keeping |k_a| <= fraction * N_a.

    The outermost shell of a truncated band cannot represent the couplings of
    its own modes, so corrections restricted to the inner band avoid feeding
    near-edge small divisors with unresolvable content.
    """
    out = np.ones(tuple(2 * int(N) + 1 for N in truncation), dtype=bool)
    for axis, N in enumerate(truncation):
        keep = np.abs(_mode_range(N)) <= int(fraction * N)
        out &= keep.reshape((1,) * axis + (-1,) + (1,) * (len(truncation) - axis - 1))
    return out


def winding_matrix(d: int, n: int) -> np.ndarray:
    """Linear part of the embedding: theta_x onto the x-angles, theta_z onto
    the z-angles, zero on y.  Shape (2d+n, d+n)."""
    P = np.zeros((2 * d + n, d + n))
    P[:d, :d] = np.eye(d)
    P[2 * d:, d:] = np.eye(n)
    return P


@dataclass(frozen=True)
class TorusEmbedding:
    """Embedding K: T^(d+n) -> T^d x R^d x T^n, winding plus periodic part.

    The angle components are kept in the lift (never reduced mod 1); the
    identity winding makes K homotopic to the zero section.
    """

    d: int
    n: int
    periodic: FourierSeries
    rho: float = 0.0

    def __post_init__(self):
        if self.periodic.rank != self.d + self.n:
            raise DimensionMismatch(
                f"series rank {self.periodic.rank} != d+n = {self.d + self.n}"
            )
        if self.periodic.value_shape != (2 * self.d + self.n,):
            raise DimensionMismatch(
                f"series value shape {self.periodic.value_shape} != (2d+n,) = "
                f"({2 * self.d + self.n},)"
            )

    @classmethod
    def flat(cls, d, n, truncation, y0=None, rho=0.0) -> "TorusEmbedding":
        """The zero-section torus (theta_x, y0, theta_z)."""
        series = FourierSeries.zeros(truncation, (2 * d + n,))
        if y0 is not None:
            center = tuple(N for N in series.truncation)
            series.coeffs[center][d:2 * d] = np.asarray(y0, dtype=float)
        return cls(d, n, series, rho)

    # -- shapes ----------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.d + self.n

    @property
    def ncomp(self) -> int:
        return 2 * self.d + self.n

    @property
    def truncation(self) -> tuple[int, ...]:
        return self.periodic.truncation

    @property
    def winding(self) -> np.ndarray:
        return winding_matrix(self.d, self.n)

    @property
    def angle_indices(self) -> np.ndarray:
        return np.array(list(range(self.d)) + list(range(2 * self.d, self.ncomp)))

    # -- evaluation --------------------------------------------------------------

    def evaluate(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        return theta @ self.winding.T + self.periodic.evaluate(theta)

    def grid_values(self, shape=None) -> np.ndarray:
        if shape is None:
            shape = minimal_grid(self.truncation)
        return grid_points(shape) @ self.winding.T + self.periodic.to_grid(shape)

    def jacobian(self) -> FourierSeries:
        """DK as a matrix-valued series: spectral derivatives of the periodic
        part plus the constant winding columns."""
        out = np.zeros(self.periodic.mode_shape + (self.ncomp, self.dim), dtype=complex)
        for axis in range(self.dim):
            out[..., :, axis] = self.periodic.derivative(axis).coeffs
        out[tuple(N for N in self.truncation)] += self.winding
        return FourierSeries(out, self.truncation)

    # -- exact operations ----------------------------------------------------------

    def shift(self, omega) -> "TorusEmbedding":
        """K composed with the rotation by omega; the winding offset is absorbed
        into the constant coefficient."""
        omega = np.asarray(omega, dtype=float)
        shifted = self.periodic.shift(omega)
        shifted.coeffs[tuple(N for N in self.truncation)] += self.winding @ omega
        return replace(self, periodic=shifted)

    def translate(self, delta: FourierSeries) -> "TorusEmbedding":
        return replace(self, periodic=self.periodic + delta)

    def with_truncation(self, truncation) -> "TorusEmbedding":
        return replace(self, periodic=self.periodic.pad_truncation(truncation))

    def analytic_norm(self, rho=None) -> float:
        """Weighted-l1 norm of the periodic part (winding excluded)."""
        return self.periodic.weighted_norm(self.rho if rho is None else rho)


def differentiate(K: TorusEmbedding, axis: int) -> FourierSeries:
    """Column ``axis`` of DK (winding derivative included)."""
    out = K.periodic.derivative(axis)
    out.coeffs[tuple(N for N in K.truncation)] += K.winding[:, axis]
    return out
