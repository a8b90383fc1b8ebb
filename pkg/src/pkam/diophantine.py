"""Frequency arithmetic: small-divisor scans over the truncation lattice.

The solver only ever divides by finitely many denominators 1 - e^(2*pi*i k.w),
so what matters in practice is a finite-radius certificate: the smallest value
of |l.w - m| |l|_1^sigma over the scanned lattice and the exact divisor floor
over the active mode set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FrequencyRejected

# below this, a scanned |l.w - m| is treated as an exact resonance
_ZERO_DIVISOR = 1e-13


def _canonical_lattice(dim: int, radius: int) -> np.ndarray:
    """Lattice vectors with 0 < |l|_1 <= radius and first nonzero entry > 0.

    The scan is invariant under l -> -l, so only one representative per pair
    is enumerated.
    """
    grids = np.meshgrid(*[np.arange(-radius, radius + 1)] * dim, indexing="ij")
    lattice = np.stack(grids, axis=-1).reshape(-1, dim)
    norms = np.abs(lattice).sum(axis=1)
    keep = (norms > 0) & (norms <= radius)
    lattice = lattice[keep]
    # lexicographic sign normalization
    first = np.zeros(len(lattice), dtype=int)
    found = np.zeros(len(lattice), dtype=bool)
    for axis in range(dim):
        col = lattice[:, axis]
        first = np.where(~found & (col != 0), np.sign(col), first)
        found |= col != 0
    return lattice[first > 0]


@dataclass(frozen=True)
class ScanResult:
    sigma: float
    radius: int
    gamma_estimate: float
    worst_vector: np.ndarray
    worst_distance: float
    smallest_divisors: np.ndarray
    record_vectors: list = field(default_factory=list)
    rejected: bool = False
    zero_vector: np.ndarray | None = None


def scan_divisors(omega, sigma: float, radius: int, n_smallest: int = 10) -> ScanResult:
    """Exhaustive scan of |l.w - m| |l|_1^sigma over 0 < |l|_1 <= radius.

    Returns the minimizing data plus the running record of lattice vectors
    that set a new distance minimum (for a 1-D golden mean these are the
    Fibonacci numbers).
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if radius < 1:
        raise ValueError(f"scan radius must be >= 1, got {radius}")
    lattice = _canonical_lattice(len(omega), int(radius))
    norms = np.abs(lattice).sum(axis=1).astype(float)
    phases = lattice @ omega
    dist = np.abs(phases - np.round(phases))

    order = np.argsort(norms, kind="stable")
    records, best = [], np.inf
    for idx in order:
        if dist[idx] < best:
            best = dist[idx]
            records.append(lattice[idx].copy())

    rejected = bool(dist.min() < _ZERO_DIVISOR)
    zero_vec = lattice[int(np.argmin(dist))].copy() if rejected else None
    quantity = dist * norms**sigma
    worst = int(np.argmin(quantity))
    divisors = 2.0 * np.abs(np.sin(np.pi * phases))
    smallest = np.sort(divisors)[:n_smallest]
    return ScanResult(
        sigma=float(sigma),
        radius=int(radius),
        gamma_estimate=float(quantity[worst]),
        worst_vector=lattice[worst].copy(),
        worst_distance=float(dist[worst]),
        smallest_divisors=smallest,
        record_vectors=records,
        rejected=rejected,
        zero_vector=zero_vec,
    )


def divisor_floor(omega, truncation) -> float:
    """Exact min of |1 - e^(2*pi*i k.w)| over the nonzero in-band modes.

    This is the quantity the cohomology solve actually divides by; an empty
    mode set returns +inf.
    """
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    axes = [np.arange(-int(N), int(N) + 1) for N in truncation]
    mesh = np.meshgrid(*axes, indexing="ij")
    phase = sum(w * k for w, k in zip(omega, mesh))
    div = 2.0 * np.abs(np.sin(np.pi * phase))
    center = tuple(int(N) for N in truncation)
    div[center] = np.inf
    out = float(div.min())
    return out


@dataclass(frozen=True)
class Frequency:
    """A frequency vector with its finite-order Diophantine certificate."""

    omega: np.ndarray
    sigma: float
    gamma_estimate: float
    scan_radius: int
    worst_vector: np.ndarray

    @classmethod
    def certify(cls, omega, sigma: float = None, scan_radius: int = 64) -> "Frequency":
        """Scan and reject resonant frequencies; sigma defaults to d+n."""
        omega = np.atleast_1d(np.asarray(omega, dtype=float))
        if sigma is None:
            sigma = float(len(omega))
        if sigma < len(omega):
            raise ValueError(
                f"Diophantine exponent sigma={sigma} below the admissible minimum "
                f"d+n={len(omega)}"
            )
        result = scan_divisors(omega, sigma, scan_radius)
        if result.rejected:
            raise FrequencyRejected(result.zero_vector, float(result.worst_distance))
        return cls(
            omega=omega,
            sigma=float(sigma),
            gamma_estimate=result.gamma_estimate,
            scan_radius=int(scan_radius),
            worst_vector=result.worst_vector,
        )

    @property
    def dim(self) -> int:
        return len(self.omega)
