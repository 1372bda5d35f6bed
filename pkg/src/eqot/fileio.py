"""Instance, plan and trace serialization plus the native SVG plot.

Instances, plans and weights travel as self-describing JSON with floats in
shortest round-trip form, so files are diffable and doubles survive a
write/read cycle bit for bit.  Traces are CSV with a fixed column set; wall
time sits in its own column so byte comparisons can skip it.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .core import EotError, EotProblem, validate_problem
from .solvers import IterationRecord

TRACE_COLUMNS_PREFIX = ["iter", "time_ms", "F", "col_residual_l1",
                        "lambda_step_l2", "lambda_y_gap_l2"]


def save_problem(problem: EotProblem, path: str) -> None:
    doc = {
        "n": problem.n,
        "N": problem.n_agents,
        "a": problem.a.tolist(),
        "b": problem.b.tolist(),
        "costs": problem.costs.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_problem(path: str) -> EotProblem:
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("n", "N", "a", "b", "costs"):
        if key not in doc:
            raise EotError(f"instance file is missing field {key!r}")
    costs = np.asarray(doc["costs"], dtype=float)
    if costs.shape != (doc["N"], doc["n"], doc["n"]):
        raise EotError("instance file cost shape disagrees with n and N")
    return validate_problem(doc["a"], doc["b"], costs)


def save_plans(pi: np.ndarray, path: str) -> None:
    pi = np.asarray(pi, dtype=float)
    doc = {"n": pi.shape[1], "N": pi.shape[0], "plans": pi.tolist()}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_plans(path: str) -> np.ndarray:
    with open(path) as fh:
        doc = json.load(fh)
    pi = np.asarray(doc["plans"], dtype=float)
    if pi.ndim != 3:
        raise EotError("plan file must hold an (N, n, n) tensor")
    return pi


def save_lambda(lam: np.ndarray, path: str) -> None:
    with open(path, "w") as fh:
        json.dump({"lambda": np.asarray(lam, dtype=float).tolist()}, fh)
        fh.write("\n")


def load_lambda(path: str) -> np.ndarray:
    with open(path) as fh:
        doc = json.load(fh)
    return np.asarray(doc["lambda"], dtype=float)


def _fmt(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def trace_header(n_agents: int) -> list[str]:
    cols = list(TRACE_COLUMNS_PREFIX)
    cols += [f"cost_agent_{k + 1}" for k in range(n_agents)]
    cols.append("hamiltonian")
    return cols


def write_trace_csv(trace, n_agents: int, path: str) -> None:
    lines = [",".join(trace_header(n_agents))]
    for rec in trace:
        row = [str(rec.iteration), _fmt(rec.time_ms), _fmt(rec.objective),
               _fmt(rec.col_residual), _fmt(rec.lambda_step),
               _fmt(rec.lambda_y_gap)]
        row += [_fmt(c) for c in rec.agent_costs]
        row.append(_fmt(rec.hamiltonian))
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


SVG_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def svg_error_plot(curves: dict[str, tuple[list[float], list[float]]],
                   path: str, width: int = 720, height: int = 480) -> None:
    """Write a log-scale error-versus-time plot, one polyline per algorithm.

    ``curves`` maps a label to (times in ms, errors); errors are clipped at
    1e-16 before taking logs.
    """
    margin = 60
    floor = 1e-16
    xs_all = [t for ts, _ in curves.values() for t in ts]
    ys_all = [math.log10(max(e, floor)) for _, es in curves.values() for e in es]
    if not xs_all:
        raise EotError("nothing to plot")
    x_lo, x_hi = min(xs_all), max(xs_all)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0

    def sx(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y_lo) / (y_hi - y_lo) * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 15}" text-anchor="middle" '
        f'font-size="14">time (ms)</text>',
        f'<text x="18" y="{height / 2:.0f}" text-anchor="middle" '
        f'font-size="14" transform="rotate(-90 18 {height / 2:.0f})">'
        f'log10 error</text>',
    ]
    for tick in range(5):
        xv = x_lo + tick * (x_hi - x_lo) / 4
        yv = y_lo + tick * (y_hi - y_lo) / 4
        parts.append(f'<text x="{sx(xv):.1f}" y="{height - margin + 18}" '
                     f'text-anchor="middle" font-size="11">{xv:.3g}</text>')
        parts.append(f'<text x="{margin - 8}" y="{sy(yv):.1f}" '
                     f'text-anchor="end" font-size="11">{yv:.2f}</text>')
    for idx, (label, (ts, es)) in enumerate(sorted(curves.items())):
        color = SVG_COLORS[idx % len(SVG_COLORS)]
        pts = " ".join(
            f"{sx(t):.2f},{sy(math.log10(max(e, floor))):.2f}"
            for t, e in zip(ts, es)
        )
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{width - margin + 5}" '
                     f'y="{margin + 16 * idx + 12}" font-size="12" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def output_dir(cli_value: str | None) -> str:
    """Resolve the output directory from the CLI value or EQOT_OUTPUT_DIR."""
    out = cli_value or os.environ.get("EQOT_OUTPUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out
