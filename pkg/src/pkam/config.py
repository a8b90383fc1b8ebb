"""Run configuration: TOML in, validated solver setup out.

TOML is used for human-edited run files, JSON for data artifacts.  All
defaults are resolved at load time and echoed verbatim into the log header so
a run is reproducible from its log alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:                       # Python < 3.11
    import tomli as tomllib

from .diophantine import Frequency
from .errors import ConfigError
from .fourier import TorusEmbedding
from .geometry import PresymplecticStructure
from .models import MapFamily, family_from_config
from .newton import SolveConfig
from .torus_io import load_torus

_SOLVER_DEFAULTS = {
    "truncation": [32, 32],
    "rho0": 1e-3,
    "delta0": None,
    "max_iterations": 20,
    "target_error": 1e-12,
    "avg_tolerance": 1e-9,
    "parameter_mask": None,
    "use_twist_shift": False,
    "damping": True,
    "max_halvings": 5,
    "grow_truncation": False,
    "max_truncation": None,
    "tail_threshold": 1e-3,
    "update_band_fraction": 0.75,
    "divisor_skip": 1e-4,
    "scan_radius": 64,
    "seed": 0,
}


@dataclass
class RunSetup:
    family: MapFamily
    frequency: Frequency
    structure: PresymplecticStructure
    config: SolveConfig
    initial: TorusEmbedding
    lam0: np.ndarray
    truncation: tuple
    continuation: dict | None
    echo: dict

    def echo_json(self) -> str:
        return json.dumps(self.echo, sort_keys=True)


def run_config(path) -> RunSetup:
    """Load and validate a TOML run configuration."""
    with open(path, "rb") as handle:
        raw = tomllib.load(handle)

    if "family" not in raw:
        raise ConfigError("missing [family] section")
    fam_section = dict(raw["family"])
    name = fam_section.pop("name", None)
    if name is None:
        raise ConfigError("[family] needs a 'name'")
    lam0 = np.asarray(fam_section.pop("lambda0", None) or [], dtype=float)
    try:
        family = family_from_config(name, fam_section)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad [family] section: {exc}") from exc
    if lam0.size == 0:
        lam0 = family.zero_lambda()
    if lam0.shape != (family.m,):
        raise ConfigError(f"lambda0 length {lam0.size} != parameter dimension {family.m}")

    if "frequency" not in raw or "omega" not in raw["frequency"]:
        raise ConfigError("missing [frequency] section with 'omega'")
    freq_section = raw["frequency"]
    omega = np.asarray(freq_section["omega"], dtype=float)
    if omega.shape != (family.d + family.n,):
        raise ConfigError(
            f"omega length {omega.size} != d+n = {family.d + family.n}"
        )
    sigma = float(freq_section.get("sigma", family.d + family.n))
    if sigma < family.d + family.n:
        raise ConfigError(
            f"sigma = {sigma} is inadmissible for the Diophantine scan: the exponent "
            f"must be at least d+n = {family.d + family.n}"
        )
    scan_radius = int(freq_section.get("scan_radius", 64))
    frequency = Frequency.certify(omega, sigma=sigma, scan_radius=scan_radius)

    solver = dict(_SOLVER_DEFAULTS)
    solver.update(raw.get("solver", {}))
    solver["scan_radius"] = scan_radius
    truncation = tuple(int(N) for N in solver.pop("truncation"))
    if len(truncation) != family.d + family.n:
        raise ConfigError(f"truncation length {len(truncation)} != d+n")
    if solver["max_truncation"] is not None:
        solver["max_truncation"] = tuple(int(N) for N in solver["max_truncation"])
    if solver["parameter_mask"] is not None:
        mask = [bool(b) for b in solver["parameter_mask"]]
        if len(mask) != family.m:
            raise ConfigError(f"parameter_mask length {len(mask)} != m = {family.m}")
        solver["parameter_mask"] = tuple(mask)
    if solver["delta0"] is None:
        solver.pop("delta0")
    try:
        config = SolveConfig(**solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad [solver] section: {exc}") from exc

    struct_section = raw.get("structure", {})
    J_spec = struct_section.get("J", "standard")
    if J_spec == "standard":
        J = None
    else:
        J = np.asarray(J_spec, dtype=float)
    primitive = struct_section.get("primitive", "y_dx")
    if primitive != "y_dx":
        raise ConfigError(f"unsupported primitive '{primitive}' (only 'y_dx' in config files)")
    structure = PresymplecticStructure(family.d, family.n, J=J)

    init_section = raw.get("initial", {})
    torus_spec = init_section.get("torus", "flat")
    if torus_spec == "flat":
        y0 = init_section.get("y0", list(omega[: family.d]))
        initial = TorusEmbedding.flat(family.d, family.n, truncation, y0=y0,
                                      rho=config.rho0)
    else:
        initial = load_torus(torus_spec)
        if (initial.d, initial.n) != (family.d, family.n):
            raise ConfigError(
                f"initial torus dimensions ({initial.d}, {initial.n}) do not match the "
                f"family ({family.d}, {family.n})"
            )
        if initial.truncation != truncation:
            initial = initial.with_truncation(truncation)

    continuation = raw.get("continuation")
    if continuation is not None:
        if "knob" not in continuation or "values" not in continuation:
            raise ConfigError("[continuation] needs 'knob' and 'values'")
        continuation = dict(continuation)

    echo = {
        "family": {"name": name, **fam_section, "lambda0": list(lam0)},
        "frequency": {"omega": list(omega), "sigma": sigma, "scan_radius": scan_radius,
                      "gamma_estimate": frequency.gamma_estimate},
        "solver": {**solver, "truncation": list(truncation),
                   "delta0": config.delta0,
                   "parameter_mask": None if solver.get("parameter_mask") is None
                   else list(solver["parameter_mask"]),
                   "max_truncation": None if solver.get("max_truncation") is None
                   else list(solver["max_truncation"])},
        "structure": {"J": J_spec if isinstance(J_spec, str) else [list(r) for r in J],
                      "primitive": primitive},
        "initial": {"torus": torus_spec, **({"y0": list(np.atleast_1d(init_section["y0"]))}
                                            if "y0" in init_section else {})},
    }
    if continuation is not None:
        echo["continuation"] = {"knob": continuation["knob"],
                                "values": list(continuation["values"])}

    return RunSetup(
        family=family, frequency=frequency, structure=structure, config=config,
        initial=initial, lam0=lam0, truncation=truncation,
        continuation=continuation, echo=echo,
    )
