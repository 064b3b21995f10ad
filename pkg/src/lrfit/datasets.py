"""Synthetic and file-based scattered point clouds.

Synthetic clouds sample a test surface at 2D Halton points (bases 2 and 3,
indices starting at 1); real clouds are read from plain XYZ text files.
Domains are axis-aligned rectangles given as ``(xmin, xmax, ymin, ymax)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np


class ScatterPoint(NamedTuple):
    x: float
    y: float
    z: float


@dataclass
class PointCloud:
    """Scattered (x, y, z) samples over a rectangular domain.

    ``x``, ``y``, ``z`` are equally sized 1D float arrays.  All points must
    lie inside the (closed) domain and all coordinates must be finite.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    domain: tuple[float, float, float, float]
    _grid_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.y = np.ascontiguousarray(self.y, dtype=float)
        self.z = np.ascontiguousarray(self.z, dtype=float)
        if not (self.x.shape == self.y.shape == self.z.shape) or self.x.ndim != 1:
            raise ValueError("x, y, z must be 1D arrays of equal length")
        x0, x1, y0, y1 = self.domain
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate domain {self.domain}")
        self.domain = (float(x0), float(x1), float(y0), float(y1))
        if self.x.size:
            if not (np.isfinite(self.x).all() and np.isfinite(self.y).all()
                    and np.isfinite(self.z).all()):
                raise ValueError("point cloud contains non-finite coordinates")
            if (self.x.min() < x0 or self.x.max() > x1
                    or self.y.min() < y0 or self.y.max() > y1):
                raise ValueError("point cloud contains points outside the domain")

    def __len__(self) -> int:
        return self.x.size

    @property
    def points(self) -> list[ScatterPoint]:
        return [ScatterPoint(*t) for t in zip(self.x, self.y, self.z)]

    def point_grid(self):
        """Bucket index over the points, built lazily and cached."""
        from .spatial import PointGrid

        key = "grid"
        if key not in self._grid_cache:
            self._grid_cache[key] = PointGrid(self.x, self.y, self.domain)
        return self._grid_cache[key]


def halton(index: int, base: int) -> float:
    """Radical-inverse of ``index`` in the given prime ``base``, in [0, 1)."""
    if base < 2:
        raise ValueError(f"Halton base must be >= 2, got {base}")
    if index < 0:
        raise ValueError(f"Halton index must be >= 0, got {index}")
    result = 0.0
    f = 1.0
    i = index
    while i > 0:
        f /= base
        result += f * (i % base)
        i //= base
    return result


def _halton_array(n: int, base: int, start: int = 1) -> np.ndarray:
    """First ``n`` Halton values for indices ``start..start+n-1``."""
    idx = np.arange(start, start + n, dtype=np.int64)
    out = np.zeros(n, dtype=float)
    f = 1.0
    while idx.any():
        f /= base
        out += f * (idx % base)
        idx //= base
    return out


def eval_f1(x, y):
    """Two-branch absolute-value surface with two sinusoidal fault curves.

    The crease of the absolute value is a gradient fault along
    x = 2/5 + sin(2*pi*y)/10; the branch switch adds a constant value jump
    of 1/5 across x = 7/10 + sin(2*pi*y)/5.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.sin(2.0 * np.pi * y)
    base = np.abs(x - 0.4 - 0.1 * s)
    shifted = np.abs(x - 0.4 - 0.1 * s - 0.2)
    out = np.where(x <= 0.7 + 0.2 * s, base, shifted)
    return out if out.ndim else float(out)


def eval_f2(x, y):
    """Branch-cut surface Im(arcsin(z) + arcsin(i*conj(z))), z = x + iy.

    Principal-branch complex arcsin; points exactly on a cut evaluate to
    the limit from the upper half-plane (negative zeros are folded onto
    positive ones so the limit side is fixed).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    # +-0.0 selects the branch side of numpy's arcsin; force the upper side.
    xs = np.where(x == 0.0, 0.0, x)
    ys = np.where(y == 0.0, 0.0, y)
    z = xs + 1j * ys
    w = ys + 1j * xs  # i * conj(z)
    out = (np.arcsin(z) + np.arcsin(w)).imag
    return out if out.ndim else float(out)


def generate_halton_cloud(n: int,
                          domain: tuple[float, float, float, float],
                          f: Callable) -> PointCloud:
    """Cloud of ``n`` samples of ``f`` at 2D Halton points in ``domain``.

    (x, y) are the affine images of the Halton pairs (bases 2 and 3,
    indices 1..n); z = f(x, y).  Deterministic.
    """
    if n < 0:
        raise ValueError(f"point count must be >= 0, got {n}")
    x0, x1, y0, y1 = domain
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"degenerate domain {domain}")
    u = _halton_array(n, 2)
    v = _halton_array(n, 3)
    x = x0 + (x1 - x0) * u
    y = y0 + (y1 - y0) * v
    z = np.asarray(f(x, y), dtype=float)
    if z.shape != x.shape:
        z = np.broadcast_to(z, x.shape).astype(float)
    return PointCloud(x, y, z, (x0, x1, y0, y1))


def add_gaussian_noise(cloud: PointCloud, sigma: float, seed: int) -> PointCloud:
    """Perturb each z by an independent N(0, sigma^2) deviate.

    Philox (counter-based) generator; the deviate of point i depends only
    on (seed, i), not on evaluation order.
    """
    if sigma < 0:
        raise ValueError(f"noise magnitude must be >= 0, got {sigma}")
    if sigma == 0:
        return PointCloud(cloud.x.copy(), cloud.y.copy(), cloud.z.copy(), cloud.domain)
    rng = np.random.Generator(np.random.Philox(seed))
    noise = rng.normal(0.0, sigma, size=len(cloud))
    return PointCloud(cloud.x.copy(), cloud.y.copy(), cloud.z + noise, cloud.domain)


def load_xyz(path) -> PointCloud:
    """Read a whitespace- or comma-delimited XYZ text file.

    Lines starting with ``#`` (and blank lines) are skipped.  The cloud
    domain is the tight bounding box of (x, y).
    """
    xs, ys, zs = [], [], []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.replace(",", " ").split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric field in {body!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ValueError(f"{path}:{lineno}: non-finite value in {body!r}")
            xs.append(vals[0])
            ys.append(vals[1])
            zs.append(vals[2])
    if not xs:
        raise ValueError(f"{path}: no data points")
    x = np.array(xs)
    y = np.array(ys)
    z = np.array(zs)
    pad_x = _bbox_pad(x.min(), x.max())
    pad_y = _bbox_pad(y.min(), y.max())
    domain = (x.min() - pad_x, x.max() + pad_x, y.min() - pad_y, y.max() + pad_y)
    return PointCloud(x, y, z, domain)


def _bbox_pad(lo: float, hi: float) -> float:
    # Degenerate extents (all x or all y equal) still need a usable domain.
    return 0.0 if hi > lo else max(1.0, abs(hi)) * 0.5


def save_xyz(cloud: PointCloud, path) -> None:
    """Write one ``x y z`` line per point with 17 significant digits."""
    with open(path, "w") as fh:
        for xi, yi, zi in zip(cloud.x, cloud.y, cloud.z):
            fh.write(f"{xi:.17g} {yi:.17g} {zi:.17g}\n")


def rescale_values(cloud: PointCloud, target: tuple[float, float]) -> PointCloud:
    """Affinely map z so min -> target[0] and max -> target[1].

    If all z are equal the values map to the midpoint of the target.
    """
    a, b = target
    if a > b:
        raise ValueError(f"invalid target interval [{a}, {b}]")
    zmin = cloud.z.min()
    zmax = cloud.z.max()
    if zmax > zmin:
        z = a + (cloud.z - zmin) * ((b - a) / (zmax - zmin))
    else:
        z = np.full_like(cloud.z, 0.5 * (a + b))
    return PointCloud(cloud.x.copy(), cloud.y.copy(), z, cloud.domain)
