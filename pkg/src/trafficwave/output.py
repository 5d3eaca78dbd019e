"""CSV and text emitters. Floats are written with ``repr`` (shortest round trip)."""

from __future__ import annotations

import csv
from pathlib import Path

from .analysis import EquilibriumReport
from .scheme import RunDiagnostics, Snapshot


def fmt(x: float) -> str:
    return repr(float(x))


def _name(prefix: str, base: str) -> str:
    return f"{prefix}_{base}" if prefix else base


def write_diagnostics(directory: Path, diag: RunDiagnostics, prefix: str = "") -> Path:
    path = Path(directory) / _name(prefix, "diagnostics.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RunDiagnostics.COLUMNS)
        for row in diag.rows():
            writer.writerow([fmt(x) for x in row])
    return path


def snapshot_filename(t: float, prefix: str = "") -> str:
    return _name(prefix, f"snapshot_t{fmt(t)}.csv")


def write_snapshot(directory: Path, snap: Snapshot, prefix: str = "") -> Path:
    path = Path(directory) / snapshot_filename(snap.t_requested, prefix)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("x", "rho", "v", "w"))
        for row in zip(snap.x, snap.rho, snap.v, snap.w):
            writer.writerow([fmt(x) for x in row])
    return path


def format_equilibria(report: EquilibriumReport) -> str:
    lines = [f"q_eq = {fmt(report.q_eq)}", f"equilibria: {len(report.roots)}",
             "rho_eq,kind,speed,flow,admissible,condition31,stabilizable"]
    for r in report.roots:
        lines.append(",".join([fmt(r.rho), r.kind, fmt(r.speed), fmt(r.flow),
                               str(r.admissible).lower(), str(r.condition31).lower(),
                               str(r.stabilizable).lower()]))
    return "\n".join(lines) + "\n"


def write_equilibria(directory: Path, report: EquilibriumReport, prefix: str = "") -> Path:
    path = Path(directory) / _name(prefix, "equilibria.txt")
    path.write_text(format_equilibria(report), encoding="utf-8")
    return path
