"""Adaptive loop: jump-class guided marking, local refinement, re-solve.

Detection, jump estimation and classification run once on the data; the
loop then marks the element containing each still-active fault point while
its refinement demand is unmet, bisects marked elements (in one or both
directions), updates the basis and re-solves the quasi-interpolant.  The
fault-driven baseline runs the same loop with every point demanding the
maximal class isotropically.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .basis import LRBasis, _eval_1d, tensor_basis
from .datasets import PointCloud
from .faults import DetectionConfig, FaultPoint, detect_fault_points, label_alignment
from .jumps import JumpConfig, classify_jumps, estimate_all
from .mesh import Element, LRMesh, _tick_level, init_tensor_mesh
from .quasi import QIConfig, Surface, _fit_key

_MODES = ("isotropic", "anisotropic", "fault_driven")


@dataclass
class AdaptiveConfig:
    qi: QIConfig = field(default_factory=QIConfig)
    jump: JumpConfig = field(default_factory=JumpConfig)
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    l_aniso: int | None = None    # iteration from which one-directional splits start
    mode: str = "isotropic"
    initial_cells: int = 2

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        la = self.aniso_start
        if self.mode == "anisotropic" and not (self.jump.min_class <= la <= self.jump.max_class):
            raise ValueError(f"need min_class <= l_aniso <= max_class, got {la}")

    @property
    def aniso_start(self) -> int:
        return self.jump.min_class if self.l_aniso is None else self.l_aniso


@dataclass
class IterationRecord:
    iteration: int
    ndofs: int
    rmse: float
    t_mark_refine: float
    t_solve: float
    t_eval: float


@dataclass
class FitReport:
    """Per-iteration sizes, errors and stage timings of one adaptive run."""

    mode: str
    records: list[IterationRecord] = field(default_factory=list)
    t_detect: float = 0.0
    t_estimate: float = 0.0
    t_extra_mark: float = 0.0     # trailing mark pass that came back empty

    @property
    def ndofs(self) -> int:
        return self.records[-1].ndofs if self.records else 0

    @property
    def rmse(self) -> float:
        return self.records[-1].rmse if self.records else math.nan

    @property
    def iterations(self) -> int:
        return self.records[-1].iteration if self.records else 0

    def totals(self) -> dict:
        """Stage totals: M+R (mark+refine), S (solve), E (evaluate/estimate), T."""
        mr = sum(r.t_mark_refine for r in self.records) + self.t_extra_mark
        s = sum(r.t_solve for r in self.records)
        e = sum(r.t_eval for r in self.records) + self.t_estimate
        return {"M+R": mr, "S": s, "E": e, "T": mr + s + e + self.t_detect}


# ----------------------------------------------------------------------
# marking and refining
# ----------------------------------------------------------------------

def _point_demand(point: FaultPoint, levels, iteration, cfg: AdaptiveConfig):
    """Directions this point still demands, or None when satisfied."""
    if cfg.mode == "fault_driven":
        need = cfg.jump.max_class
        aligned = "none"
    else:
        need = min(point.jump_class, cfg.jump.max_class)
        aligned = point.alignment
    lx, ly = levels
    one_dir = (cfg.mode == "anisotropic" and iteration >= cfg.aniso_start
               and aligned in ("x", "y"))
    if one_dir:
        # transverse to the fault: split x across a y-parallel fault
        trans = "y" if aligned == "x" else "x"
        lvl = lx if trans == "x" else ly
        if lvl >= need:
            return None
        return {trans}
    if min(lx, ly) >= need:
        return None
    dirs = set()
    if lx < need:
        dirs.add("x")
    if ly < need:
        dirs.add("y")
    return dirs


def mark(points: list[FaultPoint], mesh: LRMesh, iteration: int,
         cfg: AdaptiveConfig, dismissed: set | None = None):
    """Elements to bisect with their split directions.

    ``dismissed`` carries point indices whose demand was met in earlier
    iterations; it is updated in place so those points stay dismissed for
    the rest of the run.
    """
    if dismissed is None:
        dismissed = set()
    marked: dict = {}
    for i, p in enumerate(points):
        if i in dismissed:
            continue
        key = mesh.find_element_key(p.x, p.y)
        levels = (_tick_level(key[1] - key[0]), _tick_level(key[3] - key[2]))
        dirs = _point_demand(p, levels, iteration, cfg)
        if dirs is None:
            dismissed.add(i)
            continue
        marked.setdefault(key, set()).update(dirs)
    return [(mesh.element_view(k), marked[k]) for k in sorted(marked)]


def refine(mesh: LRMesh, basis: LRBasis, marked):
    """Bisect each marked element in its marked directions.

    Every inserted meshline spans the union of the supports of the basis
    functions overlapping the element, so it fully traverses at least one
    support.  Returns the refined (mesh, basis); coefficients propagate
    through the splits.
    """
    if not marked:
        return mesh, basis
    new_mesh = mesh.copy()
    lines = []
    for elem, dirs in marked:
        key = elem.key if isinstance(elem, Element) else elem
        ex0, ex1, ey0, ey1 = key
        cover = basis.keys_containing_box(ex0, ex1, ey0, ey1)
        if not cover:  # pragma: no cover - partition of unity guarantees one
            raise RuntimeError("marked element not covered by any basis function")
        for d in sorted(dirs):
            if d == "x":
                if ex1 - ex0 < 2:
                    raise ValueError("element too thin to bisect in x")
                span = (min(k[1][0] for k in cover), max(k[1][-1] for k in cover))
                lines.append(("v", (ex0 + ex1) // 2, span[0], span[1]))
            else:
                if ey1 - ey0 < 2:
                    raise ValueError("element too thin to bisect in y")
                span = (min(k[0][0] for k in cover), max(k[0][-1] for k in cover))
                lines.append(("h", (ey0 + ey1) // 2, span[0], span[1]))
    coords = []
    for o, c, lo, hi in sorted(set(lines)):
        new_mesh._insert_ticks(o, c, lo, hi, 1)
        coords.append((o, c))
    new_basis = basis.copy()
    new_basis.mesh = new_mesh
    new_basis.apply_inserted_coords(coords)
    return new_mesh, new_basis


# ----------------------------------------------------------------------
# incremental solve / evaluate
# ----------------------------------------------------------------------

class _Solver:
    """Keeps coefficients in sync with a growing basis.

    A function that survives refinement keeps its cached coefficient (its
    support and therefore its local fit are unchanged) unless its fitting
    box had been enlarged, in which case the surrounding mesh matters and
    the fit is redone.  Matches a full re-assembly bit for bit.
    """

    def __init__(self, cloud: PointCloud, cfg: QIConfig):
        self.cloud = cloud
        self.cfg = cfg
        self.cache: dict = {}
        self.enlarged: set = set()

    def refresh(self, basis: LRBasis):
        funcs = basis.funcs
        grid = self.cloud.point_grid()
        for key in list(self.cache):
            if key not in funcs:
                del self.cache[key]
                self.enlarged.discard(key)
        for key in sorted(funcs):
            cached = self.cache.get(key)
            if cached is not None and key not in self.enlarged:
                funcs[key].coef = cached
                continue
            coef, enlarged = _fit_key(basis, key, self.cloud, self.cfg, grid)
            self.cache[key] = coef
            funcs[key].coef = coef
            if enlarged:
                self.enlarged.add(key)
            else:
                self.enlarged.discard(key)


class _Evaluator:
    """Maintains surface values at all data sites across refinements.

    Only contributions of functions whose gamma*coef changed are
    re-evaluated; removed functions are subtracted back out.
    """

    def __init__(self, cloud: PointCloud):
        self.cloud = cloud
        self.grid = cloud.point_grid()
        self.vals = np.zeros(len(cloud))
        self.applied: dict = {}

    def refresh(self, basis: LRBasis) -> float:
        funcs = basis.funcs
        p1, p2 = basis.mesh.bidegree
        xe = basis.mesh.domain[1]
        ye = basis.mesh.domain[3]
        px, py = self.cloud.x, self.cloud.y
        for key in sorted(set(self.applied) | set(funcs)):
            fn = funcs.get(key)
            target = fn.gamma * fn.coef if fn is not None else 0.0
            old = self.applied.get(key)
            prev = old[0] if old is not None else 0.0
            if target == prev:
                continue
            if fn is not None:
                uf, vf = fn.uf, fn.vf
            else:
                uf, vf = old[1], old[2]
            idx = self.grid.query_box(uf[0], uf[-1], vf[0], vf[-1])
            if idx.size:
                vals = _eval_1d(uf, p1, px[idx], xe) * _eval_1d(vf, p2, py[idx], ye)
                self.vals[idx] += (target - prev) * vals
            if fn is None:
                del self.applied[key]
            else:
                self.applied[key] = (target, uf, vf)
        return float(np.sqrt(np.mean((self.vals - self.cloud.z) ** 2)))


# ----------------------------------------------------------------------
# the adaptive runs
# ----------------------------------------------------------------------

def _prepare_points(cloud: PointCloud, cfg: AdaptiveConfig, estimate: bool):
    t0 = time.perf_counter()
    points = detect_fault_points(cloud, cfg.detection)
    label_alignment(points, cfg.detection.theta_tol)
    t_detect = time.perf_counter() - t0
    t_estimate = 0.0
    if estimate:
        t0 = time.perf_counter()
        x0, x1, y0, y1 = cloud.domain
        nx, ny = cfg.detection.resolution
        cell = ((x1 - x0) / nx, (y1 - y0) / ny)
        estimate_all(points, cloud, cfg.jump, cell)
        classify_jumps(points, cfg.jump)
        t_estimate = time.perf_counter() - t0
    return points, t_detect, t_estimate


def _run(cloud: PointCloud, cfg: AdaptiveConfig, points=None):
    report = FitReport(mode=cfg.mode)
    if points is None:
        points, report.t_detect, report.t_estimate = _prepare_points(
            cloud, cfg, estimate=cfg.mode != "fault_driven")
    mesh = init_tensor_mesh(cloud.domain, cfg.initial_cells, cfg.qi.bidegree)
    basis = tensor_basis(mesh)
    solver = _Solver(cloud, cfg.qi)
    evaluator = _Evaluator(cloud)

    t0 = time.perf_counter()
    solver.refresh(basis)
    t_solve = time.perf_counter() - t0
    t0 = time.perf_counter()
    err = evaluator.refresh(basis)
    t_eval = time.perf_counter() - t0
    report.records.append(IterationRecord(0, len(basis), err, 0.0, t_solve, t_eval))

    dismissed: set = set()
    for it in range(1, cfg.jump.max_class + 1):
        t0 = time.perf_counter()
        marked = mark(points, mesh, it, cfg, dismissed)
        if not marked:
            report.t_extra_mark += time.perf_counter() - t0
            break
        mesh, basis = refine(mesh, basis, marked)
        t_mr = time.perf_counter() - t0
        t0 = time.perf_counter()
        solver.refresh(basis)
        t_solve = time.perf_counter() - t0
        t0 = time.perf_counter()
        err = evaluator.refresh(basis)
        t_eval = time.perf_counter() - t0
        report.records.append(IterationRecord(it, len(basis), err, t_mr, t_solve, t_eval))
    return Surface(basis, cfg.qi), report


def run_jump_driven_fit(cloud: PointCloud, cfg: AdaptiveConfig):
    """Detect, estimate, classify once; then class-guided adaptive fitting."""
    if cfg.mode == "fault_driven":
        raise ValueError("jump-driven run needs mode 'isotropic' or 'anisotropic'")
    return _run(cloud, cfg)


def run_fault_driven_fit(cloud: PointCloud, cfg: AdaptiveConfig):
    """Baseline: every fault point demands the maximal class isotropically."""
    if cfg.mode != "fault_driven":
        raise ValueError("fault-driven run needs mode 'fault_driven'")
    return _run(cloud, cfg)
