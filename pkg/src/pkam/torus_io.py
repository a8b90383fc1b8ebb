"""Torus persistence: JSON files with modes listed for k lexicographically >= 0.

The conjugate half of the spectrum is implied by Hermitian symmetry (real
maps); the round trip is bit-exact because floats are serialized with their
shortest representation.
"""

from __future__ import annotations

import json
import warnings

import numpy as np

from .errors import DimensionMismatch, SchemaError
from .fourier import FourierSeries, TorusEmbedding

WINDING_CONVENTION = "angle-identity"


def _lex_nonnegative(k) -> bool:
    for entry in k:
        if entry > 0:
            return True
        if entry < 0:
            return False
    return True          # k == 0


def save_torus(K: TorusEmbedding, path) -> None:
    coeffs = K.periodic.coeffs
    trunc = K.truncation
    entries = []
    for idx in np.ndindex(*coeffs.shape[: K.dim]):
        k = tuple(int(i) - int(N) for i, N in zip(idx, trunc))
        if not _lex_nonnegative(k):
            continue
        c = coeffs[idx]
        if not np.any(c):
            continue
        entries.append({"k": list(k), "re": list(c.real), "im": list(c.imag)})
    payload = {
        "d": K.d,
        "n": K.n,
        "truncation": list(trunc),
        "rho": K.rho,
        "winding_convention": WINDING_CONVENTION,
        "coeffs": entries,
    }
    with open(path, "w") as handle:
        json.dump(payload, handle)


def load_torus(path) -> TorusEmbedding:
    with open(path) as handle:
        payload = json.load(handle)
    for key in ("d", "n", "truncation", "coeffs"):
        if key not in payload:
            raise SchemaError(key, "missing required key")
    d, n = int(payload["d"]), int(payload["n"])
    trunc = tuple(int(N) for N in payload["truncation"])
    if len(trunc) != d + n:
        raise DimensionMismatch(f"truncation length {len(trunc)} != d+n = {d + n}")
    convention = payload.get("winding_convention", WINDING_CONVENTION)
    if convention != WINDING_CONVENTION:
        raise SchemaError("winding_convention", f"unsupported convention '{convention}'")
    if "rho" in payload:
        rho = float(payload["rho"])
    else:
        warnings.warn("torus file has no 'rho'; defaulting strip width to 0")
        rho = 0.0

    ncomp = 2 * d + n
    series = FourierSeries.zeros(trunc, (ncomp,))
    seen = {}
    for entry in payload["coeffs"]:
        for key in ("k", "re", "im"):
            if key not in entry:
                raise SchemaError("coeffs", f"entry missing '{key}'")
        k = tuple(int(v) for v in entry["k"])
        if len(k) != d + n:
            raise DimensionMismatch(f"mode {k} has length {len(k)} != d+n = {d + n}")
        if any(abs(ki) > N for ki, N in zip(k, trunc)):
            raise SchemaError("coeffs", f"mode {k} outside truncation {trunc}")
        re, im = entry["re"], entry["im"]
        if len(re) != ncomp or len(im) != ncomp:
            raise DimensionMismatch(
                f"coefficient of mode {k} has {len(re)}/{len(im)} components, expected {ncomp}"
            )
        value = np.array(re, dtype=float) + 1j * np.array(im, dtype=float)
        if k in seen:
            raise SchemaError("coeffs", f"duplicate mode {k}")
        seen[k] = value

    if tuple([0] * (d + n)) in seen and np.any(seen[tuple([0] * (d + n))].imag):
        raise SchemaError("coeffs", "mode 0 must be real (Hermitian symmetry)")
    for k, value in seen.items():
        mirror = tuple(-v for v in k)
        if mirror in seen and mirror != k:
            if not np.array_equal(seen[mirror], np.conj(value)):
                raise SchemaError(
                    "coeffs", f"modes {k} and {mirror} violate Hermitian symmetry"
                )

    center = np.array(trunc)
    for k, value in seen.items():
        series.coeffs[tuple(center + np.array(k))] = value
        mirror = tuple(-v for v in k)
        if mirror != k:
            series.coeffs[tuple(center - np.array(k))] = np.conj(value)

    return TorusEmbedding(d=d, n=n, periodic=series, rho=rho)
