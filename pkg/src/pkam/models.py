"""Built-in presymplectic map families and a finite-difference wrapper.

A family bundles lifted evaluators for f(u, lambda), its full Jacobian and its
parameter derivative.  Points u = (x, y, z) are ordered angle / action /
kernel-angle; all evaluators are vectorized over leading axes and work on
lifts (angles are never reduced mod 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class MapFamily:
    """m-parametric family of presymplectic maps of T^d x R^d x T^n."""

    d: int
    n: int
    m: int
    f: Callable
    df: Callable
    dflam: Callable
    exact_at_zero: bool = True
    y_domain: tuple = (-1e6, 1e6)
    name: str = "custom"
    params: dict = field(default_factory=dict)

    @property
    def ncomp(self) -> int:
        return 2 * self.d + self.n

    def map(self, lam) -> Callable:
        """The single map f_lambda as a plain callable on lifted points."""
        lam = np.asarray(lam, dtype=float)
        return lambda u: self.f(u, lam)

    def zero_lambda(self) -> np.ndarray:
        return np.zeros(self.m)


def coupled_standard_family(strength: float = 0.3, coupling: float = 0.1,
                            drift: float = 0.0) -> MapFamily:
    """Standard twist map coupled to a driven kernel angle (d = n = 1, m = 3).

        y' = y + lam_y - (strength / 2 pi) sin(2 pi x)
        x' = x + y' + lam_x
        z' = z + drift + lam_z + coupling * cos(2 pi x)

    The three parameters are translations threaded through the update chain,
    so d f / d lambda has the constant columns (1,0,0), (1,1,0), (0,0,1).
    The map is exact at lambda = 0; a y-translation carries flux lam_y around
    the x-loop.
    """
    Ks, eta, c = float(strength), float(coupling), float(drift)

    def f(u, lam):
        u = np.asarray(u, dtype=float)
        lam = np.asarray(lam, dtype=float)
        x, y, z = u[..., 0], u[..., 1], u[..., 2]
        y1 = y + lam[1] - (Ks / TWO_PI) * np.sin(TWO_PI * x)
        x1 = x + y1 + lam[0]
        z1 = z + c + lam[2] + eta * np.cos(TWO_PI * x)
        return np.stack([x1, y1, z1], axis=-1)

    def df(u, lam):
        u = np.asarray(u, dtype=float)
        x = u[..., 0]
        a = -Ks * np.cos(TWO_PI * x)          # d y' / d x
        out = np.zeros(u.shape[:-1] + (3, 3))
        out[..., 0, 0] = 1.0 + a
        out[..., 0, 1] = 1.0
        out[..., 1, 0] = a
        out[..., 1, 1] = 1.0
        out[..., 2, 0] = -TWO_PI * eta * np.sin(TWO_PI * x)
        out[..., 2, 2] = 1.0
        return out

    def dflam(u, lam):
        u = np.asarray(u, dtype=float)
        cols = np.array([[1.0, 1.0, 0.0],
                         [0.0, 1.0, 0.0],
                         [0.0, 0.0, 1.0]])
        return np.broadcast_to(cols, u.shape[:-1] + (3, 3)).copy()

    return MapFamily(
        d=1, n=1, m=3, f=f, df=df, dflam=dflam,
        exact_at_zero=True,
        y_domain=(-10.0, 10.0),
        name="coupled_standard",
        params={"strength": Ks, "coupling": eta, "drift": c},
    )


def finite_difference_family(fun: Callable, d: int, n: int, m: int,
                             step: float = 1e-6, exact_at_zero: bool = False,
                             y_domain: tuple = (-1e6, 1e6),
                             name: str = "finite_difference") -> MapFamily:
    """Wrap a user map fun(u, lam) with central-difference Jacobians.

    Steps are relative: h_j = step * max(1, |u_j|) per direction.
    """
    ncomp = 2 * d + n

    def df(u, lam):
        u = np.asarray(u, dtype=float)
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(u.shape[:-1] + (ncomp, ncomp))
        for j in range(ncomp):
            h = step * np.maximum(1.0, np.abs(u[..., j]))
            up, dn = u.copy(), u.copy()
            up[..., j] += h
            dn[..., j] -= h
            out[..., :, j] = (fun(up, lam) - fun(dn, lam)) / (2.0 * h[..., None])
        return out

    def dflam(u, lam):
        u = np.asarray(u, dtype=float)
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(u.shape[:-1] + (ncomp, m))
        for j in range(m):
            h = step * max(1.0, abs(float(lam[j])))
            up, dn = lam.copy(), lam.copy()
            up[j] += h
            dn[j] -= h
            out[..., :, j] = (fun(u, up) - fun(u, dn)) / (2.0 * h)
        return out

    return MapFamily(d=d, n=n, m=m, f=fun, df=df, dflam=dflam,
                     exact_at_zero=exact_at_zero, y_domain=y_domain, name=name)


def family_from_config(name: str, params: dict) -> MapFamily:
    """Resolve a family by name as it appears in run configurations."""
    builders = {"coupled_standard": coupled_standard_family}
    if name not in builders:
        raise KeyError(f"unknown family '{name}' (available: {sorted(builders)})")
    return builders[name](**params)
