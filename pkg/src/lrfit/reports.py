"""CSV / SVG emission of runs, meshes, fault classifications and surfaces."""

from __future__ import annotations

import csv
import os

import numpy as np

from .adaptive import FitReport
from .faults import FaultPoint
from .mesh import LRMesh
from .quasi import Surface
from .spatial import PointGrid

_STAGES = ("M+R", "S", "E", "T")


def report_to_csv(report: FitReport, path) -> None:
    """One row per adaptive iteration."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "ndofs", "rmse", "t_mark_refine", "t_solve", "t_eval"])
        for r in report.records:
            w.writerow([r.iteration, r.ndofs, f"{r.rmse:.6e}",
                        f"{r.t_mark_refine:.4f}", f"{r.t_solve:.4f}", f"{r.t_eval:.4f}"])


def speedup_table(jump: FitReport, fault: FitReport) -> dict:
    """Stage time ratios fault/jump (M+R, S, E, T); > 1 means jump is faster."""
    tj = jump.totals()
    tf = fault.totals()
    return {k: (tf[k] / tj[k] if tj[k] > 0 else float("inf")) for k in _STAGES}


def speedup_csv(rows: dict, path) -> None:
    """``rows`` maps a label (e.g. JB, AJB) to its speedup table."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run"] + list(_STAGES))
        for label, table in rows.items():
            w.writerow([label] + [f"{table[k]:.2f}" for k in _STAGES])


def results_csv(rows: list[dict], path) -> None:
    """Summary rows: minimal class, mode, ndofs, RMSE."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lbar", "mode", "ndofs", "rmse"])
        for r in rows:
            w.writerow([r["lbar"], r["mode"], r["ndofs"], f"{r['rmse']:.6e}"])


def fault_points_csv(points: list[FaultPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "kind", "dir_x", "dir_y", "alignment", "jump", "class"])
        for p in points:
            w.writerow([f"{p.x:.17g}", f"{p.y:.17g}", p.kind,
                        f"{p.direction[0]:.6f}", f"{p.direction[1]:.6f}",
                        p.alignment, f"{p.jump:.6e}",
                        "" if p.jump_class is None else p.jump_class])


_CLASS_COLORS = ("#2166ac", "#4393c3", "#92c5de", "#d1e5f0", "#fddbc7",
                 "#f4a582", "#d6604d", "#b2182b", "#67001f", "#40004b")


def mesh_svg(mesh: LRMesh, path, points: list[FaultPoint] | None = None,
             size: int = 800) -> None:
    """Meshlines as SVG line elements, fault points as class-colored dots."""
    x0, x1, y0, y1 = mesh.domain
    sx = size / (x1 - x0)
    sy = size / (y1 - y0)

    def tx(x):
        return (x - x0) * sx

    def ty(y):
        return size - (y - y0) * sy  # svg y grows downward

    rows = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
            f'viewBox="0 0 {size} {size}">',
            f'<rect width="{size}" height="{size}" fill="white"/>']
    for ln in mesh.meshlines():
        if ln.orientation == "v":
            rows.append(f'<line x1="{tx(ln.fixed):.2f}" y1="{ty(ln.start):.2f}" '
                        f'x2="{tx(ln.fixed):.2f}" y2="{ty(ln.stop):.2f}" '
                        f'stroke="black" stroke-width="0.6"/>')
        else:
            rows.append(f'<line x1="{tx(ln.start):.2f}" y1="{ty(ln.fixed):.2f}" '
                        f'x2="{tx(ln.stop):.2f}" y2="{ty(ln.fixed):.2f}" '
                        f'stroke="black" stroke-width="0.6"/>')
    for p in points or []:
        cls = p.jump_class if p.jump_class is not None else 0
        color = _CLASS_COLORS[cls % len(_CLASS_COLORS)]
        rows.append(f'<circle cx="{tx(p.x):.2f}" cy="{ty(p.y):.2f}" r="2.5" '
                    f'fill="{color}"/>')
    rows.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def surface_grid_csv(surface: Surface, path, resolution: int = 128) -> None:
    """Surface values on a uniform probe grid, one ``x,y,z`` row per node."""
    x0, x1, y0, y1 = surface.basis.mesh.domain
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    X, Y = np.meshgrid(xs, ys)
    px = X.ravel()
    py = Y.ravel()
    vals = surface.eval_many(px, py, grid=PointGrid(px, py, surface.basis.mesh.domain))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"])
        for xi, yi, zi in zip(px, py, vals):
            w.writerow([f"{xi:.10g}", f"{yi:.10g}", f"{zi:.10g}"])


def write_reports(jump: FitReport, fault: FitReport, out,
                  surface: Surface | None = None,
                  points: list[FaultPoint] | None = None,
                  lbar: int | None = None, grid_res: int = 128) -> list[str]:
    """Comparison artifacts: results.csv, speedup.csv, mesh.svg, surface_grid.csv."""
    os.makedirs(out, exist_ok=True)
    written = []

    def p(name):
        written.append(os.path.join(out, name))
        return written[-1]

    results_csv([
        {"lbar": lbar, "mode": jump.mode, "ndofs": jump.ndofs, "rmse": jump.rmse},
        {"lbar": lbar, "mode": fault.mode, "ndofs": fault.ndofs, "rmse": fault.rmse},
    ], p("results.csv"))
    label = "AJB" if jump.mode == "anisotropic" else "JB"
    speedup_csv({label: speedup_table(jump, fault)}, p("speedup.csv"))
    if surface is not None:
        mesh_svg(surface.basis.mesh, p("mesh.svg"), points)
        surface_grid_csv(surface, p("surface_grid.csv"), grid_res)
    return written
