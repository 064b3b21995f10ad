"""Jump magnitude estimation at fault points and min-max class binning."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datasets import PointCloud
from .faults import FaultPoint


@dataclass
class JumpConfig:
    """Class range {min_class..max_class} and the estimation neighborhood."""

    max_class: int = 10           # L, also caps the number of refinement passes
    min_class: int = 1            # L-bar
    estimation_radius: float = 2.0  # multiples of the detection cell width

    def __post_init__(self):
        if not (1 <= self.min_class <= self.max_class):
            raise ValueError(f"need 1 <= min_class <= max_class, got {self}")


def _default_cell(cloud: PointCloud):
    x0, x1, y0, y1 = cloud.domain
    return ((x1 - x0) / 128.0, (y1 - y0) / 128.0)


def _side_planes(point: FaultPoint, cloud: PointCloud, cfg: JumpConfig,
                 cell_size=None):
    """LS planes on the two sides of the fault line through the point.

    Coordinates are centered at the fault location, so the plane intercepts
    are the one-sided surface values there.  Returns None when a side stays
    below 6 points even after widening the radius once.
    """
    wx, wy = cell_size if cell_size is not None else _default_cell(cloud)
    grid = cloud.point_grid()
    nx, ny = -point.direction[1], point.direction[0]
    for widen in (1.0, 2.0):
        r = cfg.estimation_radius * widen
        idx = grid.query_disc(point.x, point.y, r * wx, r * wy)
        dx = cloud.x[idx] - point.x
        dy = cloud.y[idx] - point.y
        s = dx * nx + dy * ny
        pos = s > 0
        neg = s < 0
        if pos.sum() >= 6 and neg.sum() >= 6:
            break
    else:
        return None
    z = cloud.z[idx]
    out = []
    for mask in (pos, neg):
        n = int(mask.sum())
        A = np.column_stack((np.ones(n), dx[mask], dy[mask]))
        G = A.T @ A + (1e-12 * n) * np.eye(3)
        out.append(np.linalg.solve(G, A.T @ z[mask]))
    return out


def estimate_jump(point: FaultPoint, cloud: PointCloud, cfg: JumpConfig,
                  cell_size=None) -> float:
    """Value gap |q+(x0) - q-(x0)| across an ordinary fault point.

    Returns nan (and clears ``point.reliable``) when either side lacks
    points; such points keep the maximal class.
    """
    planes = _side_planes(point, cloud, cfg, cell_size)
    if planes is None:
        point.reliable = False
        return math.nan
    return float(abs(planes[0][0] - planes[1][0]))


def estimate_gradient_jump(point: FaultPoint, cloud: PointCloud, cfg: JumpConfig,
                           cell_size=None) -> float:
    """Euclidean norm of the gradient gap across a gradient fault point."""
    planes = _side_planes(point, cloud, cfg, cell_size)
    if planes is None:
        point.reliable = False
        return math.nan
    return float(math.hypot(planes[0][1] - planes[1][1],
                            planes[0][2] - planes[1][2]))


def estimate_all(points: list[FaultPoint], cloud: PointCloud, cfg: JumpConfig,
                 cell_size=None) -> list[FaultPoint]:
    """Fill ``jump`` for every point, dispatching on its kind."""
    for p in points:
        if p.kind == "ordinary":
            p.jump = estimate_jump(p, cloud, cfg, cell_size)
        else:
            p.jump = estimate_gradient_jump(p, cloud, cfg, cell_size)
    return points


def classify_jumps(points: list[FaultPoint], cfg: JumpConfig) -> list[FaultPoint]:
    """Linear min-max binning into {min_class..max_class}, per kind.

    Ordinary and gradient magnitudes live in different units, so each kind
    is binned on its own [min, max] range.  Degenerate ranges and
    unreliable estimates go to the maximal class (refining too much is the
    safe direction).
    """
    lo, hi = cfg.min_class, cfg.max_class
    for kind in ("ordinary", "gradient"):
        pop = [p for p in points
               if p.kind == kind and p.reliable and not math.isnan(p.jump)]
        if not pop:
            continue
        jmin = min(p.jump for p in pop)
        jmax = max(p.jump for p in pop)
        if jmax == jmin:
            for p in pop:
                p.jump_class = hi
            continue
        span = (hi - lo) / (jmax - jmin)
        for p in pop:
            c = lo + math.floor((p.jump - jmin) * span + 0.5)  # round half up
            p.jump_class = min(hi, max(lo, c))
    for p in points:
        if p.jump_class is None or not p.reliable or math.isnan(p.jump):
            p.jump_class = hi
    return points
