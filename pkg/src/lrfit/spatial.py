"""Uniform bucket index over scattered points for box queries."""

from __future__ import annotations

import numpy as np


class PointGrid:
    """CSR-style uniform grid over 2D points supporting rectangle queries.

    Points on interior bucket edges go to the higher-index bucket; the last
    row/column is closed so boundary points stay inside the grid.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray,
                 bbox: tuple[float, float, float, float], ncells: int | None = None):
        self.x = x
        self.y = y
        self.x0, self.x1, self.y0, self.y1 = bbox
        n = x.size
        if ncells is None:
            ncells = int(np.clip(np.sqrt(max(n, 1) / 8.0), 4, 512))
        self.n = ncells
        self.wx = (self.x1 - self.x0) / ncells
        self.wy = (self.y1 - self.y0) / ncells
        if n:
            ix = np.clip(((x - self.x0) / self.wx).astype(np.int64), 0, ncells - 1)
            iy = np.clip(((y - self.y0) / self.wy).astype(np.int64), 0, ncells - 1)
            cell = iy * ncells + ix
            self.order = np.argsort(cell, kind="stable")
            self.sorted_cells = cell[self.order]
        else:
            self.order = np.empty(0, dtype=np.int64)
            self.sorted_cells = np.empty(0, dtype=np.int64)

    def query_box(self, x0: float, x1: float, y0: float, y1: float) -> np.ndarray:
        """Indices of points with x in [x0, x1] and y in [y0, y1]."""
        if self.order.size == 0 or x1 < x0 or y1 < y0:
            return np.empty(0, dtype=np.int64)
        n = self.n
        ix0 = max(0, min(n - 1, int((x0 - self.x0) / self.wx)))
        ix1 = max(0, min(n - 1, int((x1 - self.x0) / self.wx)))
        iy0 = max(0, min(n - 1, int((y0 - self.y0) / self.wy)))
        iy1 = max(0, min(n - 1, int((y1 - self.y0) / self.wy)))
        chunks = []
        for iy in range(iy0, iy1 + 1):
            lo = np.searchsorted(self.sorted_cells, iy * n + ix0, side="left")
            hi = np.searchsorted(self.sorted_cells, iy * n + ix1, side="right")
            if hi > lo:
                chunks.append(self.order[lo:hi])
        if not chunks:
            return np.empty(0, dtype=np.int64)
        idx = np.concatenate(chunks)
        xs = self.x[idx]
        ys = self.y[idx]
        mask = (xs >= x0) & (xs <= x1) & (ys >= y0) & (ys <= y1)
        return idx[mask]

    def query_disc(self, cx: float, cy: float, rx: float, ry: float) -> np.ndarray:
        """Indices of points inside the axis-scaled disc
        ((x-cx)/rx)^2 + ((y-cy)/ry)^2 <= 1."""
        idx = self.query_box(cx - rx, cx + rx, cy - ry, cy + ry)
        if idx.size == 0:
            return idx
        dx = (self.x[idx] - cx) / rx
        dy = (self.y[idx] - cy) / ry
        return idx[dx * dx + dy * dy <= 1.0]
