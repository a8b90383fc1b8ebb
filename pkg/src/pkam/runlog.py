"""Deterministic CSV logs for solver runs.

Floats are written with repr (shortest round-trip form), so identical runs
produce byte-identical logs; the resolved configuration is echoed in the
header comment.
"""

from __future__ import annotations

CSV_COLUMNS = ("iter", "err_before", "err_after", "delta_norm", "eps_norm",
               "divisor_floor", "condV", "rank_avg_lambda", "tail_ratio", "accepted")

FRAME_COLUMNS = ("iter", "cond_M", "cond_V", "qm_residual", "rank_avg_lambda",
                 "sigma_min_avg_lambda", "det_avg_S", "max_offpattern_block")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_row(report) -> str:
    fields = (
        report.iteration,
        float(report.error_before),
        float(report.error_after),
        float(report.delta_norm),
        float(report.eps_norm),
        float(report.divisor_floor),
        float(report.frame_summary["cond_V"]),
        report.frame_summary["rank_avg_lambda"],
        float(report.tail_ratio),
        report.accepted,
    )
    return ",".join(_fmt(v) for v in fields)


def frame_row(report) -> str:
    s = report.frame_summary
    fields = (report.iteration, float(s["cond_M"]), float(s["cond_V"]),
              float(s["qm_residual"]), s["rank_avg_lambda"],
              float(s["sigma_min_avg_lambda"]), float(s["det_avg_S"]),
              float(s["max_offpattern_block"]))
    return ",".join(_fmt(v) for v in fields)


def write_run_log(path, reports, echo_json: str) -> None:
    lines = [f"# pkam run config: {echo_json}", ",".join(CSV_COLUMNS)]
    lines += [report_row(r) for r in reports]
    with open(path, "w", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")


def write_frame_log(path, reports) -> None:
    lines = [",".join(FRAME_COLUMNS)] + [frame_row(r) for r in reports]
    with open(path, "w", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
