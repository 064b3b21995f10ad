"""Detection of value and gradient discontinuities in scattered data.

The detector rasterizes the cloud onto a uniform grid and fits one plane
per cell; cells whose residual stands out against the robust global
residual scale are candidates.  Inside a candidate the points are split by
the best separating line recovered from the residual pattern, one plane is
fitted per side, and the cell is confirmed as a fault crossing only when
the two-plane model clearly beats a single quadratic (which is what smooth
curvature would prefer).  The sign of the confirmed discontinuity decides
the kind: value gap -> ordinary, gradient gap -> gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .datasets import PointCloud


@dataclass
class DetectionConfig:
    resolution: tuple[int, int] = (128, 128)
    residual_factor: float = 4.0    # candidate gate vs. median cell residual
    value_factor: float = 3.0       # ordinary threshold, multiples of noise scale
    gradient_factor: float = 3.0    # gradient threshold, noise scale / cell width
    side_vs_quad: float = 0.7       # two-plane rms must be below this * quadratic rms
    theta_tol: float = 10.0         # axis alignment tolerance, degrees
    min_cell_points: int = 12
    min_side_points: int = 4
    split_iterations: int = 2


@dataclass
class FaultPoint:
    """Detected discontinuity crossing with its analysis state."""

    x: float
    y: float
    kind: str                       # "ordinary" | "gradient"
    direction: tuple[float, float]  # unit tangent of the fault
    alignment: str = "none"         # "x" | "y" | "none"
    jump: float = math.nan          # set by the jump estimator
    jump_class: int | None = None   # set by the classifier
    reliable: bool = True

    @property
    def location(self):
        return (self.x, self.y)


class DetectionGrid:
    """Uniform cell partition of the cloud with per-cell point lists."""

    def __init__(self, cloud: PointCloud, resolution):
        nx, ny = resolution
        if nx < 2 or ny < 2:
            raise ValueError(f"grid resolution must be >= 2, got {resolution}")
        if len(cloud) == 0:
            raise ValueError("empty point cloud")
        self.cloud = cloud
        self.nx, self.ny = int(nx), int(ny)
        x0, x1, y0, y1 = cloud.domain
        self.wx = (x1 - x0) / nx
        self.wy = (y1 - y0) / ny
        ix = np.minimum((np.floor((cloud.x - x0) / self.wx)).astype(np.int64), nx - 1)
        iy = np.minimum((np.floor((cloud.y - y0) / self.wy)).astype(np.int64), ny - 1)
        self.cell = iy * nx + ix
        self.order = np.argsort(self.cell, kind="stable")
        self.counts = np.bincount(self.cell, minlength=nx * ny)
        self.splits = np.concatenate(([0], np.cumsum(self.counts)))

    def cell_points(self, ix: int, iy: int) -> np.ndarray:
        c = iy * self.nx + ix
        return self.order[self.splits[c]:self.splits[c + 1]]

    def cell_center(self, ix: int, iy: int):
        x0, _, y0, _ = self.cloud.domain
        return (x0 + (ix + 0.5) * self.wx, y0 + (iy + 0.5) * self.wy)


def build_grid(cloud: PointCloud, resolution) -> DetectionGrid:
    """Index the cloud on a uniform grid (half-open cells, last row closed)."""
    return DetectionGrid(cloud, resolution)


def _plane_fit(x, y, z):
    """LS plane z ~ a + b*x + c*y; returns (coef, rms)."""
    n = x.size
    A = np.column_stack((np.ones(n), x, y))
    G = A.T @ A + (1e-12 * n) * np.eye(3)
    coef = np.linalg.solve(G, A.T @ z)
    r = z - A @ coef
    return coef, math.sqrt(float(r @ r) / n)


def _quad_fit_rms(x, y, z):
    n = x.size
    A = np.column_stack((np.ones(n), x, y, x * x, x * y, y * y))
    coef, *_ = np.linalg.lstsq(A, z, rcond=None)
    r = z - A @ coef
    return math.sqrt(float(r @ r) / n)


def _separator(xl, yl, r, min_side):
    """Initial separating line from the residual-sign pattern.

    Returns (normal, midpoint) or None.  A one-sided step gives two offset
    sign clusters; a crease gives a same-sign band, whose principal axis is
    then taken as the fault direction.
    """
    pos = r > 0
    neg = r < 0
    if pos.sum() < min_side or neg.sum() < min_side:
        return None
    cp = np.array([xl[pos].mean(), yl[pos].mean()])
    cn = np.array([xl[neg].mean(), yl[neg].mean()])
    d = cp - cn
    norm = math.hypot(*d)
    if norm > 0.10:
        return d / norm, 0.5 * (cp + cn)
    # crease pattern: pick the more line-like sign cluster as the fault band
    best = None
    for mask, center in ((pos, cp), (neg, cn)):
        pts = np.column_stack((xl[mask] - center[0], yl[mask] - center[1]))
        cov = pts.T @ pts / pts.shape[0]
        w, v = np.linalg.eigh(cov)
        flat = w[0] / max(w[1], 1e-300)
        if best is None or flat < best[0]:
            tangent = v[:, 1]
            best = (flat, np.array([-tangent[1], tangent[0]]), center)
    return best[1], best[2]


def detect_fault_points(cloud: PointCloud, cfg: DetectionConfig,
                        stats: dict | None = None) -> list[FaultPoint]:
    """One fault point per grid cell confirmed as fault-crossed.

    Output is ordered by cell index.  Smooth regions produce no points;
    cells that cannot be analyzed are counted in ``stats``, never raised.
    """
    grid = build_grid(cloud, cfg.resolution)
    nx, ny = grid.nx, grid.ny
    ncell = nx * ny
    x0, _, y0, _ = cloud.domain
    wx, wy = grid.wx, grid.wy

    # cell-local coordinates in [-0.5, 0.5] and batched plane fits
    ix = grid.cell % nx
    iy = grid.cell // nx
    xl = (cloud.x - x0) / wx - ix - 0.5
    yl = (cloud.y - y0) / wy - iy - 0.5
    z = cloud.z
    cell = grid.cell
    n = grid.counts.astype(float)
    s = {}
    for name, w in (("x", xl), ("y", yl), ("xx", xl * xl), ("xy", xl * yl),
                    ("yy", yl * yl), ("z", z), ("xz", xl * z), ("yz", yl * z),
                    ("zz", z * z)):
        s[name] = np.bincount(cell, weights=w, minlength=ncell)
    valid = grid.counts >= max(3, cfg.min_cell_points)
    G = np.zeros((ncell, 3, 3))
    G[:, 0, 0] = n
    G[:, 0, 1] = G[:, 1, 0] = s["x"]
    G[:, 0, 2] = G[:, 2, 0] = s["y"]
    G[:, 1, 1] = s["xx"]
    G[:, 1, 2] = G[:, 2, 1] = s["xy"]
    G[:, 2, 2] = s["yy"]
    G += (1e-12 * np.maximum(n, 1.0))[:, None, None] * np.eye(3)
    b = np.stack((s["z"], s["xz"], s["yz"]), axis=1)
    coef = np.linalg.solve(G, b[..., None])[..., 0]
    rss = s["zz"] - np.einsum("ij,ij->i", coef, b)
    rms = np.sqrt(np.maximum(rss, 0.0) / np.maximum(n, 1.0))
    scale = float(np.median(rms[valid])) if valid.any() else 0.0

    counters = {"cells_tested": int(valid.sum()), "candidates": 0,
                "skipped_sides": 0, "skipped_smooth": 0, "skipped_weak": 0}
    tau_ord = cfg.value_factor * scale
    tau_grad = cfg.gradient_factor * scale / (0.5 * (wx + wy))
    points: list[FaultPoint] = []
    cand = np.flatnonzero(valid & (rms > cfg.residual_factor * scale) & (rms > 0))
    counters["candidates"] = int(cand.size)
    for c in cand:
        cix, ciy = int(c % nx), int(c // nx)
        idx = grid.cell_points(cix, ciy)
        cx, cy, cz = xl[idx], yl[idx], z[idx]
        r = cz - (coef[c, 0] + coef[c, 1] * cx + coef[c, 2] * cy)
        sep = _separator(cx, cy, r, cfg.min_side_points)
        if sep is None:
            counters["skipped_sides"] += 1
            continue
        normal, mid = sep
        ok = True
        for _ in range(cfg.split_iterations):
            side = (cx - mid[0]) * normal[0] + (cy - mid[1]) * normal[1]
            amask = side > 0
            bmask = side < 0
            if amask.sum() < cfg.min_side_points or bmask.sum() < cfg.min_side_points:
                ok = False
                break
            ca = np.array([cx[amask].mean(), cy[amask].mean()])
            cb = np.array([cx[bmask].mean(), cy[bmask].mean()])
            d = ca - cb
            nrm = math.hypot(*d)
            if nrm == 0.0:
                ok = False
                break
            normal = d / nrm
            tangent = np.array([-normal[1], normal[0]])
            m = 0.5 * (ca + cb)
            # keep the crossing location on the separator line
            mid = mid + float((m - mid) @ tangent) * tangent
        if not ok:
            counters["skipped_sides"] += 1
            continue
        pa, rms_a = _plane_fit(cx[amask], cy[amask], cz[amask])
        pb, rms_b = _plane_fit(cx[bmask], cy[bmask], cz[bmask])
        rms_two = math.sqrt((rms_a ** 2 * amask.sum() + rms_b ** 2 * bmask.sum())
                            / (amask.sum() + bmask.sum()))
        rms_quad = _quad_fit_rms(cx, cy, cz)
        if rms_two > cfg.side_vs_quad * rms_quad:
            counters["skipped_smooth"] += 1
            continue
        va = pa[0] + pa[1] * mid[0] + pa[2] * mid[1]
        vb = pb[0] + pb[1] * mid[0] + pb[2] * mid[1]
        dval = abs(va - vb)
        ga = np.array([pa[1] / wx, pa[2] / wy])
        gb = np.array([pb[1] / wx, pb[2] / wy])
        dgrad = float(np.hypot(*(ga - gb)))
        if dval > tau_ord:
            kind = "ordinary"
        elif dgrad > tau_grad:
            kind = "gradient"
        else:
            counters["skipped_weak"] += 1
            continue
        mx = float(np.clip(mid[0], -0.5, 0.5))
        my = float(np.clip(mid[1], -0.5, 0.5))
        px = x0 + (cix + 0.5 + mx) * wx
        py = y0 + (ciy + 0.5 + my) * wy
        tangent = (-float(normal[1]), float(normal[0]))
        points.append(FaultPoint(px, py, kind, tangent))
    if stats is not None:
        stats.update(counters)
        stats["points"] = len(points)
        stats["noise_scale"] = scale
    return points


def label_alignment(points: list[FaultPoint], theta_tol: float) -> list[FaultPoint]:
    """Set alignment from the angle between the fault tangent and the axes."""
    for p in points:
        dx, dy = p.direction
        ang_x = math.degrees(math.atan2(abs(dy), abs(dx)))
        if ang_x <= theta_tol:
            p.alignment = "x"
        elif 90.0 - ang_x <= theta_tol:
            p.alignment = "y"
        else:
            p.alignment = "none"
    return points
