"""Command-line surface: solve, continue, diagnose, align, verify.

Exit codes: 0 on success, 2 when the iteration fails to converge, 3 on
degeneracy errors (frame inverses, parameter rank, phase response), 1 on any
other solver error.  PKAM_THREADS caps the threading of the numeric backends
and must be honored before numpy is first imported, which is why the heavy
imports live inside the command handlers.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")


def _apply_thread_cap():
    threads = os.environ.get("PKAM_THREADS")
    if threads:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, threads)


def _json_ready(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def _cmd_solve(args) -> int:
    from . import runlog
    from .config import run_config
    from .errors import NoConvergence
    from .newton import solve
    from .torus_io import save_torus

    setup = run_config(args.config)
    try:
        result = solve(setup.initial, setup.lam0, setup.family, setup.frequency,
                       setup.structure, setup.config)
        code = 0
    except NoConvergence as exc:
        print(f"pkam solve: {exc}", file=sys.stderr)
        result = exc.result
        code = 2
    if args.out:
        save_torus(result.K, args.out)
    if args.log:
        runlog.write_run_log(args.log, result.reports, setup.echo_json())
    if args.frame_log:
        runlog.write_frame_log(args.frame_log, result.reports)
    summary = {
        "converged": result.converged,
        "iterations": result.iterations,
        "final_error": result.final_error,
        "final_grid_sup": result.final_grid_sup,
        "lambda": list(result.lam),
        "smallness_indicator": result.smallness_indicator,
    }
    print(json.dumps(_json_ready(summary), sort_keys=True))
    return code


def _cmd_continue(args) -> int:
    from . import runlog
    from .config import run_config
    from .models import family_from_config
    from .newton import continue_in_parameter
    from .torus_io import save_torus

    setup = run_config(args.config)
    if setup.continuation is None:
        print("pkam continue: config has no [continuation] section", file=sys.stderr)
        return 1
    knob = setup.continuation["knob"]
    values = setup.continuation["values"]
    base = dict(setup.echo["family"])
    name = base.pop("name")
    base.pop("lambda0", None)

    def make_family(value):
        return family_from_config(name, {**base, knob: value})

    stages = continue_in_parameter(make_family, values, setup.initial, setup.lam0,
                                   setup.frequency, setup.structure, setup.config)
    prefix = args.out_prefix
    rows = []
    for i, stage in enumerate(stages):
        if prefix:
            save_torus(stage.result.K, f"{prefix}{i:03d}.json")
        rows.append({
            "stage": i,
            knob: stage.knob,
            "converged": stage.converged,
            "iterations": stage.result.iterations,
            "final_error": stage.result.final_error,
        })
        if args.log:
            runlog.write_run_log(f"{args.log}.{i:03d}", stage.result.reports,
                                 setup.echo_json())
    print(json.dumps(_json_ready(rows), sort_keys=True))
    return 0 if all(s.converged for s in stages) else 2


def _parse_lam(args, setup):
    import numpy as np

    if getattr(args, "lam", None):
        return np.asarray(json.loads(args.lam), dtype=float)
    return setup.lam0


def _cmd_diagnose(args) -> int:
    from .config import run_config
    from .diagnostics import nondegeneracy_report, twist_matrix, vanishing_average
    from .diophantine import scan_divisors
    from .geometry import lagrangian_defect
    from .newton import invariance_error
    from .reducibility import build_frame
    from .torus_io import load_torus

    setup = run_config(args.config)
    out = {}
    if args.frequency or not args.torus:
        freq = setup.frequency
        scan = scan_divisors(freq.omega, freq.sigma, freq.scan_radius)
        out["frequency"] = {
            "gamma": scan.gamma_estimate,
            "sigma": freq.sigma,
            "scan_radius": freq.scan_radius,
            "worst_vector": scan.worst_vector,
            "smallest_divisors": scan.smallest_divisors,
        }
    if args.torus:
        K = load_torus(args.torus)
        lam = _parse_lam(args, setup)
        err = invariance_error(K, setup.family, lam, setup.frequency.omega)
        frame = build_frame(K, setup.family, lam, setup.structure,
                            setup.frequency.omega)
        _, L_norm = lagrangian_defect(K, setup.structure)
        vanish = vanishing_average(frame, err.norm(K.rho))
        twist = twist_matrix(frame)
        out["torus"] = {
            "error_norm": err.norm(K.rho),
            "error_grid_sup": err.grid_sup,
            "lagrangian_norm": L_norm,
            "block_residuals": frame.block_residuals,
            "nondegeneracy": nondegeneracy_report(frame, L_norm),
            "vanishing": {"mu_avg": vanish.mu_avg, "y_block_max": vanish.y_block_max,
                          "tolerance": vanish.tolerance,
                          "y_block_vanishes": vanish.y_block_vanishes},
            "twist": {"avg_S": twist.avg_S, "determinant": twist.determinant,
                      "singular": twist.singular},
        }
    print(json.dumps(_json_ready(out), sort_keys=True))
    return 0


def _cmd_align(args) -> int:
    from .config import run_config
    from .errors import NotAligned
    from .uniqueness import align_phase
    from .torus_io import load_torus

    Ka, Kb = load_torus(args.a), load_torus(args.b)
    structure = None
    if args.config:
        structure = run_config(args.config).structure
    try:
        result = align_phase(Ka, Kb, structure=structure)
        print(json.dumps(_json_ready({
            "tau": result.tau, "residual": result.residuals[-1],
            "rounds": result.rounds,
        }), sort_keys=True))
        return 0
    except NotAligned as exc:
        print(json.dumps(_json_ready({
            "tau": None, "residual": exc.best_residual, "aligned": False,
        }), sort_keys=True))
        return 1


def _cmd_verify(args) -> int:
    from .config import run_config
    from .diagnostics import (nondegeneracy_report, offgrid_invariance,
                              orbit_shadow_error, twist_matrix, vanishing_average)
    from .geometry import flux, lagrangian_defect, verify_presymplectic
    from .newton import invariance_error
    from .reducibility import build_frame, presymplectic_basis_defect
    from .torus_io import load_torus

    setup = run_config(args.config)
    K = load_torus(args.torus)
    family, lam = setup.family, _parse_lam(args, setup)
    omega = setup.frequency.omega
    err = invariance_error(K, family, lam, omega)
    frame = build_frame(K, family, lam, setup.structure, omega)
    _, L_norm = lagrangian_defect(K, setup.structure)
    shadow = orbit_shadow_error(K, family, lam, omega, steps=args.orbit_steps)
    report = {
        "error_norm": err.norm(K.rho),
        "error_grid_sup": err.grid_sup,
        "offgrid_residual": offgrid_invariance(K, family, lam, omega, seed=setup.config.seed),
        "orbit_shadow_max": float(shadow.max()),
        "lagrangian_norm": L_norm,
        "block_residuals": frame.block_residuals,
        "basis_defect": presymplectic_basis_defect(frame),
        "nondegeneracy": nondegeneracy_report(frame, L_norm),
        "vanishing_y_block": vanishing_average(frame, err.norm(K.rho)).y_block_max,
        "twist_determinant": twist_matrix(frame).determinant,
        "reference_flux": flux(family.map(family.zero_lambda()), setup.structure),
        "presymplectic_check": vars(verify_presymplectic(family, lam, setup.structure)),
    }
    print(json.dumps(_json_ready(report), sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pkam",
        description="Invariant tori with prescribed Diophantine frequency for "
                    "parametric families of presymplectic maps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the quasi-Newton iteration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="write the final torus (JSON)")
    p.add_argument("--log", help="write the run log (CSV)")
    p.add_argument("--frame-log", help="write per-iteration frame summaries (CSV)")
    p.set_defaults(handler=_cmd_solve)

    p = sub.add_parser("continue", help="sweep a family knob, reseeding each stage")
    p.add_argument("--config", required=True)
    p.add_argument("--out-prefix", help="per-stage torus file prefix")
    p.add_argument("--log", help="per-stage run log prefix")
    p.set_defaults(handler=_cmd_continue)

    p = sub.add_parser("diagnose", help="frequency scan and torus diagnostics")
    p.add_argument("--config", required=True)
    p.add_argument("--torus")
    p.add_argument("--lam", help="parameter vector as a JSON array (defaults to lambda0)")
    p.add_argument("--frequency", action="store_true",
                   help="include the divisor scan report")
    p.set_defaults(handler=_cmd_diagnose)

    p = sub.add_parser("align", help="phase-align two tori")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--config")
    p.set_defaults(handler=_cmd_align)

    p = sub.add_parser("verify", help="full a-posteriori suite on a torus file")
    p.add_argument("--config", required=True)
    p.add_argument("--torus", required=True)
    p.add_argument("--lam", help="parameter vector as a JSON array (defaults to lambda0)")
    p.add_argument("--orbit-steps", type=int, default=1000)
    p.set_defaults(handler=_cmd_verify)
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    args = build_parser().parse_args(argv)
    from .errors import DegenerateTorus, PkamError, RankDeficient, SingularResponse

    try:
        return args.handler(args)
    except (DegenerateTorus, RankDeficient, SingularResponse) as exc:
        print(f"pkam: degeneracy: {exc}", file=sys.stderr)
        return 3
    except PkamError as exc:
        print(f"pkam: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
