"""Quasi-interpolation: coefficients from local least squares + dual functional.

Each basis function gets its coefficient by (1) gathering the data points in
its support, enlarged ring by ring when fewer than ``min_points`` are found,
(2) fitting a tensor polynomial by ridge-regularized least squares on
box-normalized coordinates, lowering the degree if the normal system is
ill-conditioned, and (3) applying the de Boor-Fix dual functional of the
B-spline to the fitted polynomial.  No global solve is involved.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np

from .basis import LRBasis, LRBSpline, accumulate_at_points, _eval1_scalar
from .datasets import PointCloud


@dataclass
class QIConfig:
    """Settings of the local least-squares quasi-interpolant."""

    bidegree: tuple[int, int] = (3, 3)
    mu: float = 1e-6            # ridge weight on normalized monomial coefficients
    min_points: int = 5         # minimum local point count m
    kappa_max: float = 1e5      # condition ceiling of the (regularized) normal system

    def __post_init__(self):
        if self.mu < 0 or self.min_points < 1 or self.kappa_max <= 1:
            raise ValueError(f"invalid QI configuration {self}")


@dataclass
class LocalPolynomial:
    """Tensor polynomial on box-normalized coordinates.

    ``coef[i, j]`` multiplies X^i * Y^j with X, Y in [-1, 1] over ``box``.
    """

    coef: np.ndarray
    box: tuple[float, float, float, float]

    def eval(self, x, y):
        X, Y = _normalize(np.asarray(x, float), np.asarray(y, float), self.box)
        return np.polynomial.polynomial.polyval2d(X, Y, self.coef)


def _normalize(x, y, box):
    x0, x1, y0, y1 = box
    return (2.0 * x - (x0 + x1)) / (x1 - x0), (2.0 * y - (y0 + y1)) / (y1 - y0)


# ----------------------------------------------------------------------
# support gathering
# ----------------------------------------------------------------------

def collect_support_points(bsp: LRBSpline, cloud: PointCloud, m: int,
                           mesh=None):
    """Indices of the cloud points used to fit ``bsp``, plus the fitting box.

    Starts from the support box; while fewer than ``m`` points are inside,
    every side moves outward to the next meshline coordinate (one element
    ring), stopping once the box covers the domain.
    """
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    grid = cloud.point_grid()
    if mesh is not None and bsp.key is not None:
        uk, vk = bsp.key
        tx0, tx1, ty0, ty1 = uk[0], uk[-1], vk[0], vk[-1]
        box = (mesh.x_of(tx0), mesh.x_of(tx1), mesh.y_of(ty0), mesh.y_of(ty1))
        idx = grid.query_box(*box)
        vx, hy = mesh._coords["v"], mesh._coords["h"]
        N = mesh.nticks
        while idx.size < m and (tx0 > 0 or tx1 < N or ty0 > 0 or ty1 < N):
            tx0 = vx[max(0, bisect_left(vx, tx0) - 1)]
            tx1 = vx[min(len(vx) - 1, bisect_right(vx, tx1))]
            ty0 = hy[max(0, bisect_left(hy, ty0) - 1)]
            ty1 = hy[min(len(hy) - 1, bisect_right(hy, ty1))]
            box = (mesh.x_of(tx0), mesh.x_of(tx1), mesh.y_of(ty0), mesh.y_of(ty1))
            idx = grid.query_box(*box)
        return idx, box
    # standalone B-spline: grow by half a box width per round
    box = bsp.support
    idx = grid.query_box(*box)
    dom = cloud.domain
    while idx.size < m and box != dom:
        gx = 0.25 * (box[1] - box[0])
        gy = 0.25 * (box[3] - box[2])
        box = (max(dom[0], box[0] - gx), min(dom[1], box[1] + gx),
               max(dom[2], box[2] - gy), min(dom[3], box[3] + gy))
        idx = grid.query_box(*box)
    return idx, box


# ----------------------------------------------------------------------
# local fit
# ----------------------------------------------------------------------

def local_ls_fit(points, box, cfg: QIConfig) -> LocalPolynomial:
    """Ridge least-squares tensor polynomial fit on the normalized box.

    If the condition number of the (regularized) normal system exceeds
    ``kappa_max`` the bidegree is lowered one step per direction until it
    is acceptable or the fit is constant.
    """
    if isinstance(points, tuple):
        x, y, z = points
    else:
        pts = np.asarray(points, dtype=float)
        if pts.size == 0:
            raise ValueError("local fit needs at least one point")
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    if x.size == 0:
        raise ValueError("local fit needs at least one point")
    p1, p2 = cfg.bidegree
    X, Y = _normalize(x, y, box)
    d1, d2 = p1, p2
    while True:
        A = _design(X, Y, d1, d2)
        ncol = A.shape[1]
        last = d1 == 0 and d2 == 0
        if cfg.mu > 0.0:
            G = A.T @ A + cfg.mu * np.eye(ncol)
            w = np.linalg.eigvalsh(G)
            cond = w[-1] / w[0] if w[0] > 0 else math.inf
            if cond <= cfg.kappa_max or last:
                c = np.linalg.solve(G, A.T @ z)
                break
        else:
            c, _, rank, s = np.linalg.lstsq(A, z, rcond=None)
            smin = s[-1] if s.size else 0.0
            cond = (s[0] / smin) ** 2 if smin > 0 and rank == ncol else math.inf
            if cond <= cfg.kappa_max or last:
                break
        d1, d2 = max(0, d1 - 1), max(0, d2 - 1)
    coef = np.zeros((p1 + 1, p2 + 1))
    coef[:d1 + 1, :d2 + 1] = c.reshape(d1 + 1, d2 + 1)
    return LocalPolynomial(coef, tuple(box))


def _design(X, Y, d1, d2):
    Au = np.vander(X, d1 + 1, increasing=True)
    Av = np.vander(Y, d2 + 1, increasing=True)
    return (Au[:, :, None] * Av[:, None, :]).reshape(X.size, -1)


# ----------------------------------------------------------------------
# dual functional
# ----------------------------------------------------------------------

def _dual_weights(interior, p):
    """a[i] = lambda(t^i) for the de Boor-Fix functional of one direction.

    lambda(f) = sum_k (-1)^k psi^(p-k)(tau) f^(k)(tau) / p! with
    psi(t) = prod_j (t - t_j) over the p interior knots and tau their mean.
    """
    tau = float(np.mean(interior))
    psi = np.poly(np.asarray(interior, dtype=float))  # monic, highest first
    fact = math.factorial(p)
    w = np.empty(p + 1)
    for k in range(p + 1):
        dpsi = np.polyder(psi, p - k) if p - k > 0 else psi
        w[k] = ((-1) ** k) * np.polyval(dpsi, tau) / fact
    a = np.empty(p + 1)
    for i in range(p + 1):
        acc = 0.0
        for k in range(min(i, p) + 1):
            acc += w[k] * math.perm(i, k) * tau ** (i - k)
        a[i] = acc
    return a


def dual_coefficient(bsp: LRBSpline, q: LocalPolynomial) -> float:
    """de Boor-Fix functional of ``bsp`` applied to the local polynomial.

    Exact on polynomials: for q of bidegree <= the B-spline's this returns
    the B-spline coefficient (blossom value) of q.
    """
    p1, p2 = bsp.degree
    if q.coef.shape != (p1 + 1, p2 + 1):
        raise ValueError(f"polynomial shape {q.coef.shape} does not match degree {bsp.degree}")
    un, _ = _normalize(np.asarray(bsp.u), np.zeros(len(bsp.u)), q.box)
    _, vn = _normalize(np.zeros(len(bsp.v)), np.asarray(bsp.v), q.box)
    au = _dual_weights(un[1:p1 + 1], p1)
    av = _dual_weights(vn[1:p2 + 1], p2)
    return float(au @ q.coef @ av)


# ----------------------------------------------------------------------
# surface
# ----------------------------------------------------------------------

@dataclass
class Surface:
    """LR B-spline surface: a basis with coefficients plus its QI settings."""

    basis: LRBasis
    config: QIConfig

    @property
    def ndofs(self) -> int:
        return len(self.basis)

    def eval(self, x: float, y: float) -> float:
        return eval_surface(self, x, y)

    def eval_many(self, px, py, grid=None) -> np.ndarray:
        return accumulate_at_points(self.basis, np.asarray(px, float),
                                    np.asarray(py, float), grid=grid)


def _fit_key(basis, key, cloud, cfg, grid):
    """Coefficient of one basis function; True when the box was enlarged."""
    bsp = basis.view(key)
    idx, box = collect_support_points(bsp, cloud, cfg.min_points, mesh=basis.mesh)
    q = local_ls_fit((cloud.x[idx], cloud.y[idx], cloud.z[idx]), box, cfg)
    enlarged = box != (bsp.u[0], bsp.u[-1], bsp.v[0], bsp.v[-1])
    return dual_coefficient(bsp, q), enlarged


def assemble_qi(basis: LRBasis, cloud: PointCloud, cfg: QIConfig) -> Surface:
    """Set every coefficient from its local fit; returns the surface."""
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    if cfg.bidegree != basis.mesh.bidegree:
        raise ValueError(f"config bidegree {cfg.bidegree} != mesh bidegree "
                         f"{basis.mesh.bidegree}")
    grid = cloud.point_grid()
    for key in sorted(basis.funcs):
        coef, _ = _fit_key(basis, key, cloud, cfg, grid)
        basis.funcs[key].coef = coef
    return Surface(basis, cfg)


def eval_surface(surface: Surface, x: float, y: float) -> float:
    """Sum of coef * gamma * B at one point."""
    basis = surface.basis
    x0, x1, y0, y1 = basis.mesh.domain
    if not (x0 <= x <= x1 and y0 <= y <= y1):
        raise ValueError(f"point ({x}, {y}) outside domain")
    p1, p2 = basis.mesh.bidegree
    acc = 0.0
    for key in basis.keys_at_point(x, y):
        fn = basis.funcs[key]
        acc += (fn.gamma * fn.coef
                * _eval1_scalar(fn.uf, p1, x, x1) * _eval1_scalar(fn.vf, p2, y, y1))
    return acc


def rmse(surface: Surface, cloud: PointCloud) -> float:
    """Root mean square error of the surface at all data sites."""
    if len(cloud) == 0:
        raise ValueError("empty point cloud")
    vals = surface.eval_many(cloud.x, cloud.y, grid=cloud.point_grid())
    return float(np.sqrt(np.mean((vals - cloud.z) ** 2)))


# ----------------------------------------------------------------------
# serialization
# ----------------------------------------------------------------------

def surface_to_text(surface: Surface) -> str:
    """Mesh text followed by one ``bspline`` line per basis function."""
    parts = [surface.basis.mesh.to_text()]
    cfg = surface.config
    parts.append(f"# qi mu {cfg.mu:.17g} m {cfg.min_points} kappa {cfg.kappa_max:.17g}\n")
    for key in sorted(surface.basis.funcs):
        fn = surface.basis.funcs[key]
        uk = " ".join(f"{v:.17g}" for v in fn.uf)
        vk = " ".join(f"{v:.17g}" for v in fn.vf)
        parts.append(f"bspline {uk} | {vk} | {fn.gamma:.17g} {fn.coef:.17g}\n")
    return "".join(parts)


def surface_from_text(text: str) -> Surface:
    from .mesh import LRMesh
    from .basis import tensor_basis

    mesh_lines = []
    bsp_lines = []
    mu, m, kappa = 1e-6, 5, 1e5
    for raw in text.splitlines():
        line = raw.strip()
        if line.startswith("bspline "):
            bsp_lines.append(line)
        elif line.startswith("# qi "):
            parts = line.split()
            mu, m, kappa = float(parts[3]), int(parts[5]), float(parts[7])
        else:
            mesh_lines.append(raw)
    mesh = LRMesh.from_text("\n".join(mesh_lines))
    basis = tensor_basis(mesh)
    cfg = QIConfig(bidegree=mesh.bidegree, mu=mu, min_points=m, kappa_max=kappa)
    index = {}
    for line in bsp_lines:
        body = line[len("bspline "):]
        us, vs, tail = (seg.strip() for seg in body.split("|"))
        uk = tuple(mesh.snap_x(float(t)) for t in us.split())
        vk = tuple(mesh.snap_y(float(t)) for t in vs.split())
        g, c = (float(t) for t in tail.split())
        index[(uk, vk)] = (g, c)
    if set(index) != set(basis.funcs):
        raise ValueError("surface text basis does not match its mesh")
    for key, (g, c) in index.items():
        basis.funcs[key].gamma = g
        basis.funcs[key].coef = c
    return Surface(basis, cfg)
