"""LR B-spline collection on an LR mesh.

Each basis function is a tensor B-spline with local knot vectors of minimal
support, carrying a scaling weight gamma so that the scaled collection
forms a partition of unity.  Inserting a meshline splits every function
whose support it traverses via the knot-insertion relation
B = alpha1*B1 + alpha2*B2; gamma hands down additively and identical
children merge.  The cascade repeats until every function has minimal
support again.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .mesh import LRMesh, MeshLine, _BUCKETS


# ----------------------------------------------------------------------
# single B-spline evaluation
# ----------------------------------------------------------------------

def bspline_eval_1d(knots, degree: int, t, closed_right: bool = False):
    """Value of the one B-spline with the given p+2 knots at ``t``.

    Zero outside [first, last); right-continuous at interior knots.  With
    ``closed_right`` the value at t == last knot is the limit from the
    left, which is the convention at the domain's right boundary.
    """
    k = [float(v) for v in knots]
    if len(k) != degree + 2:
        raise ValueError(f"need {degree + 2} knots for degree {degree}, got {len(k)}")
    if any(a > b for a, b in zip(k, k[1:])) or not k[0] < k[-1]:
        raise ValueError(f"malformed knot vector {knots}")
    t_arr = np.asarray(t, dtype=float)
    right = k[-1] if closed_right else None
    out = _eval_1d(np.array(k), degree, np.atleast_1d(t_arr), right)
    return float(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)


def _eval_1d(k: np.ndarray, p: int, t: np.ndarray, right_edge=None) -> np.ndarray:
    """Vectorized Cox-de Boor for a single B-spline (p+2 knots)."""
    cols = []
    for j in range(p + 1):
        col = (t >= k[j]) & (t < k[j + 1])
        if right_edge is not None and k[j + 1] == right_edge and k[j] < k[j + 1]:
            col = col | (t == right_edge)
        cols.append(col.astype(float))
    for d in range(1, p + 1):
        for j in range(p + 1 - d):
            den_l = k[j + d] - k[j]
            den_r = k[j + d + 1] - k[j + 1]
            acc = None
            if den_l > 0.0:
                acc = (t - k[j]) * (1.0 / den_l) * cols[j]
            if den_r > 0.0:
                term = (k[j + d + 1] - t) * (1.0 / den_r) * cols[j + 1]
                acc = term if acc is None else acc + term
            cols[j] = acc if acc is not None else np.zeros_like(t)
    return cols[0]


def _eval1_scalar(k, p: int, t: float, right_edge=None) -> float:
    """Scalar Cox-de Boor, avoids numpy overhead in per-point loops."""
    if t < k[0] or t > k[-1]:
        return 0.0
    if t == k[-1] and (right_edge is None or t != right_edge):
        return 0.0
    col = [0.0] * (p + 1)
    for j in range(p + 1):
        if (k[j] <= t < k[j + 1]) or (t == k[j + 1] == right_edge and k[j] < k[j + 1]):
            col[j] = 1.0
    for d in range(1, p + 1):
        for j in range(p + 1 - d):
            acc = 0.0
            den_l = k[j + d] - k[j]
            if den_l > 0.0 and col[j]:
                acc += (t - k[j]) / den_l * col[j]
            den_r = k[j + d + 1] - k[j + 1]
            if den_r > 0.0 and col[j + 1]:
                acc += (k[j + d + 1] - t) / den_r * col[j + 1]
            col[j] = acc
    return col[0]


# ----------------------------------------------------------------------
# public B-spline view
# ----------------------------------------------------------------------

@dataclass
class LRBSpline:
    """Tensor B-spline with local knots, scaling weight and coefficient."""

    u: tuple
    v: tuple
    gamma: float = 1.0
    coefficient: float = 0.0
    key: tuple = field(default=None, repr=False)  # tick identity when basis-owned

    def __post_init__(self):
        self.u = tuple(float(t) for t in self.u)
        self.v = tuple(float(t) for t in self.v)

    @property
    def degree(self) -> tuple[int, int]:
        return (len(self.u) - 2, len(self.v) - 2)

    @property
    def support(self) -> tuple[float, float, float, float]:
        return (self.u[0], self.u[-1], self.v[0], self.v[-1])

    def eval(self, x: float, y: float, domain=None) -> float:
        """Unscaled value B(x, y); ``domain`` enables the closed right edge."""
        p1, p2 = self.degree
        rx = domain[1] if domain is not None else None
        ry = domain[3] if domain is not None else None
        return (_eval1_scalar(self.u, p1, x, rx)
                * _eval1_scalar(self.v, p2, y, ry))


def greville(bsp: LRBSpline) -> tuple[float, float]:
    """Per-direction average of the p interior knots."""
    p1, p2 = bsp.degree
    return (sum(bsp.u[1:p1 + 1]) / p1, sum(bsp.v[1:p2 + 1]) / p2)


def split_by_knot_insertion(bsp: LRBSpline, direction: str, that: float):
    """Split one B-spline at ``that`` in ``direction`` ('u' or 'v').

    Returns (B1, alpha1, B2, alpha2) with B = alpha1*B1 + alpha2*B2
    pointwise.  B1 keeps the head of the refined knot vector, B2 the tail.
    """
    if direction not in ("u", "v"):
        raise ValueError(f"direction must be 'u' or 'v', got {direction!r}")
    knots = bsp.u if direction == "u" else bsp.v
    p = len(knots) - 2
    if not (knots[0] < that < knots[-1]):
        raise ValueError(f"knot {that} not inside open support ({knots[0]}, {knots[-1]})")
    if sum(1 for t in knots if t == that) >= p + 1:
        raise ValueError(f"multiplicity of {that} would exceed degree+1")
    k1, a1, k2, a2 = _split_knots(knots, that)
    if direction == "u":
        b1 = LRBSpline(k1, bsp.v, a1 * bsp.gamma, bsp.coefficient)
        b2 = LRBSpline(k2, bsp.v, a2 * bsp.gamma, bsp.coefficient)
    else:
        b1 = LRBSpline(bsp.u, k1, a1 * bsp.gamma, bsp.coefficient)
        b2 = LRBSpline(bsp.u, k2, a2 * bsp.gamma, bsp.coefficient)
    return b1, a1, b2, a2


def _split_knots(knots, that):
    """Refined head/tail knot vectors and their alpha weights."""
    p = len(knots) - 2
    ins = sorted(list(knots) + [that])
    k1 = tuple(ins[:-1])
    k2 = tuple(ins[1:])
    a1 = 1.0 if that >= knots[p] else (that - knots[0]) / (knots[p] - knots[0])
    a2 = 1.0 if that <= knots[1] else (knots[p + 1] - that) / (knots[p + 1] - knots[1])
    return k1, a1, k2, a2


def _polar_monomial_weights(interior, p: int):
    """a[i] = polar form of t^i at the given p interior knots.

    This is the de Boor-Fix functional
    lambda(f) = sum_k (-1)^k psi^(p-k)(tau) f^(k)(tau) / p!  with
    psi(t) = prod_j (t - t_j) and tau the knot average, written out on the
    monomial basis.
    """
    import math

    tau = sum(interior) / p
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


def _merge_atoms(a, b, wa, wb):
    """Convex combination of two polar-atom lists, coalescing equal knots."""
    acc: dict = {}
    for w, uk, vk in a:
        acc[(uk, vk)] = acc.get((uk, vk), 0.0) + wa * w
    for w, uk, vk in b:
        acc[(uk, vk)] = acc.get((uk, vk), 0.0) + wb * w
    return tuple((w, uk, vk) for (uk, vk), w in sorted(acc.items(), key=lambda t: t[0]))


# ----------------------------------------------------------------------
# the LR collection
# ----------------------------------------------------------------------

class _Fn:
    __slots__ = ("gamma", "coef", "uf", "vf", "atoms")

    def __init__(self, gamma, coef, uf, vf, atoms):
        self.gamma = gamma
        self.coef = coef
        self.uf = uf  # float knot arrays, cached for evaluation
        self.vf = vf
        # Dual functional of the hand-down process: a convex combination of
        # polar-form evaluations, ((weight, u interior ticks, v interior
        # ticks), ...).  Plain de Boor-Fix would assign each function the
        # polar of its own interior knots, which fails to reproduce
        # polynomials once scaling weights drop below 1; carrying the exact
        # combination accumulated through the splits keeps reproduction
        # exact on every reachable mesh.
        self.atoms = atoms


class LRBasis:
    """Minimal-support LR B-spline collection bound to an LRMesh.

    Functions are keyed by their integer-tick knot vectors, so merging of
    identical children during the split cascade is exact.
    """

    def __init__(self, mesh: LRMesh):
        self.mesh = mesh
        self.funcs: dict = {}
        self._sbuckets: dict = {}
        self._touched: set = set()
        p1, p2 = mesh.bidegree
        s, c, N = mesh.scale, mesh.cells, mesh.nticks
        gu = [0] * (p1 + 1) + [k * s for k in range(1, c)] + [N] * (p1 + 1)
        gv = [0] * (p2 + 1) + [k * s for k in range(1, c)] + [N] * (p2 + 1)
        for i in range(c + p1):
            for j in range(c + p2):
                key = (tuple(gu[i:i + p1 + 2]), tuple(gv[j:j + p2 + 2]))
                self._create(key, 1.0, 0.0)
        # user meshes may already carry lines beyond the initial tensor grid
        self._cascade(deque(sorted(self.funcs)))
        self._collapse_touched()

    # -- bookkeeping ----------------------------------------------------

    def __len__(self) -> int:
        return len(self.funcs)

    def _floats(self, key):
        uk, vk = key
        uf = np.array([self.mesh.x_of(t) for t in uk])
        vf = np.array([self.mesh.y_of(t) for t in vk])
        return uf, vf

    def _create(self, key, gamma, coef, atoms=None):
        uf, vf = self._floats(key)
        if atoms is None:
            atoms = ((1.0, key[0][1:-1], key[1][1:-1]),)
        self.funcs[key] = _Fn(gamma, coef, uf, vf, atoms)
        self._register(key)

    def _bucket_span(self, key):
        uk, vk = key
        n = self.mesh.nticks
        bx0 = (uk[0] * _BUCKETS) // n
        bx1 = min(_BUCKETS - 1, ((uk[-1] - 1) * _BUCKETS) // n)
        by0 = (vk[0] * _BUCKETS) // n
        by1 = min(_BUCKETS - 1, ((vk[-1] - 1) * _BUCKETS) // n)
        return bx0, bx1, by0, by1

    def _register(self, key):
        bx0, bx1, by0, by1 = self._bucket_span(key)
        for bx in range(bx0, bx1 + 1):
            for by in range(by0, by1 + 1):
                self._sbuckets.setdefault((bx, by), set()).add(key)

    def _unregister(self, key):
        bx0, bx1, by0, by1 = self._bucket_span(key)
        for bx in range(bx0, bx1 + 1):
            for by in range(by0, by1 + 1):
                s = self._sbuckets.get((bx, by))
                if s is not None:
                    s.discard(key)

    def view(self, key) -> LRBSpline:
        fn = self.funcs[key]
        return LRBSpline(tuple(fn.uf), tuple(fn.vf), fn.gamma, fn.coef, key=key)

    def splines(self) -> list[LRBSpline]:
        return [self.view(k) for k in sorted(self.funcs)]

    def copy(self) -> "LRBasis":
        b = object.__new__(LRBasis)
        b.mesh = self.mesh
        b.funcs = {k: _Fn(f.gamma, f.coef, f.uf, f.vf, f.atoms)
                   for k, f in self.funcs.items()}
        b._sbuckets = {k: set(v) for k, v in self._sbuckets.items()}
        b._touched = set(self._touched)
        return b

    def keys_at_point(self, x: float, y: float):
        """Keys of functions whose (closed) support contains the point."""
        tx = self.mesh.tick_of_x(x)
        ty = self.mesh.tick_of_y(y)
        n = self.mesh.nticks
        bx = min(_BUCKETS - 1, max(0, int(tx * _BUCKETS / n)))
        by = min(_BUCKETS - 1, max(0, int(ty * _BUCKETS / n)))
        cands = set()
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                cands |= self._sbuckets.get((bx + dx, by + dy), set())
        out = []
        for key in cands:
            uk, vk = key
            if uk[0] <= tx <= uk[-1] and vk[0] <= ty <= vk[-1]:
                out.append(key)
        return sorted(out)

    def keys_containing_box(self, tx0, tx1, ty0, ty1):
        """Keys whose support contains the given tick box."""
        n = self.mesh.nticks
        cx = (tx0 + tx1) // 2
        cy = (ty0 + ty1) // 2
        bx = min(_BUCKETS - 1, max(0, (cx * _BUCKETS) // n))
        by = min(_BUCKETS - 1, max(0, (cy * _BUCKETS) // n))
        cands = set()
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                cands |= self._sbuckets.get((bx + dx, by + dy), set())
        out = []
        for key in cands:
            uk, vk = key
            if uk[0] <= tx0 and tx1 <= uk[-1] and vk[0] <= ty0 and ty1 <= vk[-1]:
                out.append(key)
        return sorted(out)

    # -- refinement cascade ----------------------------------------------

    def _violation(self, key, affected=None):
        """First (direction, coord) where a meshline traverses the support
        with multiplicity above the function's knot multiplicity."""
        mesh = self.mesh
        uk, vk = key
        for direction, knots, lo_t, hi_t, orient in (
                ("u", uk, vk[0], vk[-1], "v"),
                ("v", vk, uk[0], uk[-1], "h")):
            if affected is None:
                coords = mesh.coords_between(orient, knots[0], knots[-1])
            else:
                arr = affected[orient]
                coords = arr[bisect_right(arr, knots[0]):bisect_left(arr, knots[-1])]
            for c in coords:
                mult = sum(1 for t in knots if t == c)
                if mesh.covered(orient, c, lo_t, hi_t, mult + 1):
                    return direction, c
        return None

    def _split_key(self, key, direction, c, queue):
        fn = self.funcs.pop(key)
        self._unregister(key)
        uk, vk = key
        knots = uk if direction == "u" else vk
        k1, a1, k2, a2 = _split_knots(knots, c)
        for child_knots, alpha in ((k1, a1), (k2, a2)):
            ckey = (child_knots, vk) if direction == "u" else (uk, child_knots)
            g = alpha * fn.gamma
            child = self.funcs.get(ckey)
            if child is not None:
                tot = child.gamma + g
                child.coef = (child.gamma * child.coef + g * fn.coef) / tot
                child.gamma = tot
                child.atoms = _merge_atoms(child.atoms, fn.atoms,
                                           (tot - g) / tot, g / tot)
            else:
                self._create(ckey, g, fn.coef, atoms=fn.atoms)
            self._touched.add(ckey)
            queue.append(ckey)

    def _cascade(self, queue, affected=None):
        # First pass may restrict the check to freshly inserted coordinates;
        # children created here get the full minimal-support check.
        full = deque()
        while queue:
            key = queue.popleft()
            if key not in self.funcs:
                continue
            hit = self._violation(key, affected)
            if hit is not None:
                self._split_key(key, *hit, full if affected is not None else queue)
            elif affected is not None:
                full.append(key)
        if affected is None:
            return
        while full:
            key = full.popleft()
            if key not in self.funcs:
                continue
            hit = self._violation(key)
            if hit is not None:
                self._split_key(key, *hit, full)

    def apply_inserted_coords(self, coords: list[tuple[str, int]]):
        """Run the split cascade after meshline insertions at the given
        (orientation, fixed tick) coordinates (already merged into the mesh)."""
        affected = {
            "v": sorted({c for o, c in coords if o == "v"}),
            "h": sorted({c for o, c in coords if o == "h"}),
        }
        if not affected["v"] and not affected["h"]:
            return
        queue = deque()
        for key in sorted(self.funcs):
            uk, vk = key
            av, ah = affected["v"], affected["h"]
            if bisect_left(av, uk[-1]) > bisect_right(av, uk[0]) or \
               bisect_left(ah, vk[-1]) > bisect_right(ah, vk[0]):
                queue.append(key)
        self._cascade(queue, affected)


def tensor_basis(mesh: LRMesh) -> LRBasis:
    """Scaled LR B-spline collection spanning the spline space on ``mesh``."""
    return LRBasis(mesh)


def update_basis(basis: LRBasis, inserted: MeshLine) -> LRBasis:
    """Split every function whose support the (merged) line traverses.

    Mutates and returns ``basis``.  If the basis's mesh does not contain
    the line yet, it is inserted (on a copy of the mesh) first.
    """
    mesh = basis.mesh
    if inserted.orientation == "v":
        fixed = mesh.snap_x(inserted.fixed)
        lo, hi = mesh.snap_y(inserted.start), mesh.snap_y(inserted.stop)
    else:
        fixed = mesh.snap_y(inserted.fixed)
        lo, hi = mesh.snap_x(inserted.start), mesh.snap_x(inserted.stop)
    if not mesh.covered(inserted.orientation, fixed, lo, hi, inserted.multiplicity):
        mesh = mesh.copy()
        mesh.insert_line(inserted)
        basis.mesh = mesh
    basis.apply_inserted_coords([(inserted.orientation, fixed)])
    return basis


def eval_surface_basis(basis: LRBasis, x: float, y: float):
    """(B, gamma*B(x, y)) for every function whose support contains (x, y)."""
    x0, x1, y0, y1 = basis.mesh.domain
    if not (x0 <= x <= x1 and y0 <= y <= y1):
        raise ValueError(f"point ({x}, {y}) outside domain")
    p1, p2 = basis.mesh.bidegree
    out = []
    for key in basis.keys_at_point(x, y):
        fn = basis.funcs[key]
        val = (_eval1_scalar(fn.uf, p1, x, x1) * _eval1_scalar(fn.vf, p2, y, y1))
        if val != 0.0:
            out.append((basis.view(key), fn.gamma * val))
    return out


def accumulate_at_points(basis: LRBasis, px: np.ndarray, py: np.ndarray,
                         grid=None, unit_coefficients: bool = False) -> np.ndarray:
    """Sum of coef*gamma*B over the basis, evaluated at many points at once.

    With ``unit_coefficients`` every coefficient is replaced by 1, which
    turns the result into the partition-of-unity sum.
    """
    from .spatial import PointGrid

    mesh = basis.mesh
    if grid is None:
        grid = PointGrid(px, py, mesh.domain)
    p1, p2 = mesh.bidegree
    x1 = mesh.domain[1]
    y1 = mesh.domain[3]
    out = np.zeros(px.size)
    for key in sorted(basis.funcs):
        fn = basis.funcs[key]
        w = fn.gamma if unit_coefficients else fn.gamma * fn.coef
        if w == 0.0:
            continue
        idx = grid.query_box(fn.uf[0], fn.uf[-1], fn.vf[0], fn.vf[-1])
        if idx.size == 0:
            continue
        vals = _eval_1d(fn.uf, p1, px[idx], x1) * _eval_1d(fn.vf, p2, py[idx], y1)
        out[idx] += w * vals
    return out
