"""Box partition of a rectangle by axis-aligned meshlines with multiplicities.

Coordinates are kept internally as integer ticks on a dyadic grid: the
initial tensor cells are subdivided into 2**DEPTH_BITS ticks per direction,
so every midpoint bisection lands exactly on an integer and meshline
merging and knot comparisons are exact.  User-supplied coordinates must sit
on this grid (midpoint refinement of the initial mesh always does).
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right, insort
from dataclasses import dataclass

DEPTH_BITS = 30
_BUCKETS = 64


@dataclass(frozen=True)
class MeshLine:
    """Axis-aligned segment: 'v' lines have constant x, 'h' lines constant y.

    ``span`` is the interval covered in the free coordinate.
    """

    orientation: str
    fixed: float
    start: float
    stop: float
    multiplicity: int = 1

    def __post_init__(self):
        o = {"v": "v", "vertical": "v", "h": "h", "horizontal": "h"}.get(self.orientation)
        if o is None:
            raise ValueError(f"unknown orientation {self.orientation!r}")
        object.__setattr__(self, "orientation", o)
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be >= 1")
        if not self.start < self.stop:
            raise ValueError(f"empty span [{self.start}, {self.stop}]")


@dataclass(frozen=True)
class Element:
    """Open box of the partition with its dyadic refinement depth per axis."""

    x0: float
    x1: float
    y0: float
    y1: float
    level_x: int
    level_y: int
    key: tuple = None  # tick box, stable across float round-off

    @property
    def box(self):
        return (self.x0, self.x1, self.y0, self.y1)

    def center(self):
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))


def _tick_level(width: int) -> int:
    # level = log2(initial cell width / element width), integer for dyadic boxes
    if width <= 0:
        raise ValueError("empty element")
    if width & (width - 1) == 0:
        return DEPTH_BITS - (width.bit_length() - 1)
    import math

    return round(DEPTH_BITS - math.log2(width))


class LRMesh:
    """LR mesh: meshline sets per direction plus the element partition.

    Treat instances as immutable; :func:`insert_meshline` returns an updated
    copy.  The mutating underscore methods exist for the refinement driver,
    which works on a private copy.
    """

    def __init__(self, domain, cells_per_dir: int, bidegree: tuple[int, int]):
        x0, x1, y0, y1 = (float(v) for v in domain)
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate domain {domain}")
        p1, p2 = bidegree
        if cells_per_dir < 1 or p1 < 1 or p2 < 1:
            raise ValueError("need cells_per_dir >= 1 and bidegree >= (1, 1)")
        self.domain = (x0, x1, y0, y1)
        self.bidegree = (int(p1), int(p2))
        self.cells = int(cells_per_dir)
        self.scale = 1 << DEPTH_BITS          # ticks per initial cell
        self.nticks = self.cells * self.scale  # ticks per direction
        # orientation -> {fixed tick: [(start, stop, mult), ...] disjoint sorted}
        self._segs = {"v": {}, "h": {}}
        self._coords = {"v": [], "h": []}      # sorted fixed ticks per orientation
        self._elems = set()                    # (x0, x1, y0, y1) tick boxes
        self._ebuckets = {}                    # (bx, by) -> set of element keys
        N, s, pc = self.nticks, self.scale, self.cells
        p_mult = {"v": p1 + 1, "h": p2 + 1}
        for o in ("v", "h"):
            for k in range(pc + 1):
                mult = p_mult[o] if k in (0, pc) else 1
                self._segs[o][k * s] = [(0, N, mult)]
                insort(self._coords[o], k * s)
        for i in range(pc):
            for j in range(pc):
                self._add_element((i * s, (i + 1) * s, j * s, (j + 1) * s))

    # -- tick/coordinate conversion ------------------------------------

    def x_of(self, t: int) -> float:
        x0, x1, _, _ = self.domain
        return x0 + (x1 - x0) * (t / self.nticks)

    def y_of(self, t: int) -> float:
        _, _, y0, y1 = self.domain
        return y0 + (y1 - y0) * (t / self.nticks)

    def tick_of_x(self, x: float) -> float:
        x0, x1, _, _ = self.domain
        return (x - x0) / (x1 - x0) * self.nticks

    def tick_of_y(self, y: float) -> float:
        _, _, y0, y1 = self.domain
        return (y - y0) / (y1 - y0) * self.nticks

    def snap_x(self, x: float) -> int:
        return self._snap(self.tick_of_x(x), x)

    def snap_y(self, y: float) -> int:
        return self._snap(self.tick_of_y(y), y)

    def _snap(self, t: float, orig: float) -> int:
        r = round(t)
        if abs(t - r) > 1e-3 or r < 0 or r > self.nticks:
            raise ValueError(f"coordinate {orig} is not on the dyadic mesh grid")
        return int(r)

    # -- elements -------------------------------------------------------

    def _bucket_range(self, a: int, b: int):
        # bucket indices overlapped by the half-open tick interval [a, b)
        lo = (a * _BUCKETS) // self.nticks
        hi = ((b - 1) * _BUCKETS) // self.nticks
        return max(0, lo), min(_BUCKETS - 1, hi)

    def _add_element(self, key):
        self._elems.add(key)
        bx0, bx1 = self._bucket_range(key[0], key[1])
        by0, by1 = self._bucket_range(key[2], key[3])
        for bx in range(bx0, bx1 + 1):
            for by in range(by0, by1 + 1):
                self._ebuckets.setdefault((bx, by), set()).add(key)

    def _remove_element(self, key):
        self._elems.discard(key)
        bx0, bx1 = self._bucket_range(key[0], key[1])
        by0, by1 = self._bucket_range(key[2], key[3])
        for bx in range(bx0, bx1 + 1):
            for by in range(by0, by1 + 1):
                s = self._ebuckets.get((bx, by))
                if s is not None:
                    s.discard(key)

    def element_view(self, key) -> Element:
        ex0, ex1, ey0, ey1 = key
        return Element(self.x_of(ex0), self.x_of(ex1), self.y_of(ey0), self.y_of(ey1),
                       _tick_level(ex1 - ex0), _tick_level(ey1 - ey0), key)

    def element_keys_near(self, tx0, tx1, ty0, ty1):
        """Candidate element keys whose box may overlap the tick rectangle."""
        n = self.nticks
        bx0 = max(0, int(tx0 * _BUCKETS // n) - 1)
        bx1 = min(_BUCKETS - 1, int(tx1 * _BUCKETS // n) + 1)
        by0 = max(0, int(ty0 * _BUCKETS // n) - 1)
        by1 = min(_BUCKETS - 1, int(ty1 * _BUCKETS // n) + 1)
        out = set()
        for bx in range(bx0, bx1 + 1):
            for by in range(by0, by1 + 1):
                out |= self._ebuckets.get((bx, by), set())
        return out

    def find_element_key(self, x: float, y: float):
        x0, x1, y0, y1 = self.domain
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            raise ValueError(f"point ({x}, {y}) outside domain")
        tx = self.tick_of_x(x)
        ty = self.tick_of_y(y)
        best = None
        for key in self.element_keys_near(tx, tx, ty, ty):
            if key[0] <= tx <= key[1] and key[2] <= ty <= key[3]:
                # lower-left tie break for points on shared edges
                if best is None or (key[0], key[2]) < (best[0], best[2]):
                    best = key
        if best is None:  # pragma: no cover - partition covers the domain
            raise RuntimeError(f"no element found for ({x}, {y})")
        return best

    # -- meshline structure ----------------------------------------------

    def segments(self, orientation: str, fixed_tick: int):
        return self._segs[orientation].get(fixed_tick, [])

    def coords_between(self, orientation: str, lo: int, hi: int):
        """Fixed ticks of ``orientation`` lines strictly inside (lo, hi)."""
        cs = self._coords[orientation]
        return cs[bisect_right(cs, lo):bisect_left(cs, hi)]

    def covered(self, orientation: str, fixed_tick: int, lo: int, hi: int,
                min_mult: int = 1) -> bool:
        """True if lines at ``fixed_tick`` cover [lo, hi] with mult >= min_mult."""
        pos = lo
        for s, e, m in self._segs[orientation].get(fixed_tick, []):
            if e <= pos:
                continue
            if s > pos:
                return False
            if m >= min_mult:
                pos = e
                if pos >= hi:
                    return True
            else:
                return False
        return pos >= hi

    def multiplicity_at(self, orientation: str, fixed_tick: int, at: int) -> int:
        """Multiplicity of the ``orientation`` line at position ``at`` along it."""
        for s, e, m in self._segs[orientation].get(fixed_tick, []):
            if s <= at < e or (at == e == self.nticks and s < at):
                return m
        return 0

    def _point_supported(self, orientation: str, fixed: int, at: int) -> bool:
        # A segment endpoint must land on the boundary, on a transversal
        # line covering it, or inside existing collinear coverage.
        if at in (0, self.nticks):
            return True
        other = "h" if orientation == "v" else "v"
        if self.multiplicity_at(other, at, fixed) > 0:
            return True
        for s, e, _ in self._segs[orientation].get(fixed, []):
            if s <= at <= e:
                return True
        return False

    def _merge_segment(self, orientation: str, fixed: int, lo: int, hi: int, mult: int):
        """Overlay [lo, hi] at ``mult`` with max-on-overlap; split elements on
        newly covered pieces.  Returns list of newly covered (start, stop)."""
        segs = self._segs[orientation].get(fixed, [])
        pts = {lo, hi}
        for s, e, _ in segs:
            pts.add(s)
            pts.add(e)
        pts = sorted(pts)
        out = []
        fresh = []
        for a, b in zip(pts, pts[1:]):
            old = 0
            for s, e, m in segs:
                if s <= a and b <= e:
                    old = m
                    break
            new = max(old, mult) if (lo <= a and b <= hi) else old
            if new > 0:
                if out and out[-1][1] == a and out[-1][2] == new:
                    out[-1] = (out[-1][0], b, new)
                else:
                    out.append((a, b, new))
            if old == 0 and new > 0:
                if fresh and fresh[-1][1] == a:
                    fresh[-1] = (fresh[-1][0], b)
                else:
                    fresh.append((a, b))
        if out:
            if fixed not in self._segs[orientation]:
                insort(self._coords[orientation], fixed)
            self._segs[orientation][fixed] = [tuple(t) for t in out]
        for a, b in fresh:
            self._split_elements(orientation, fixed, a, b)
        return fresh

    def _split_elements(self, orientation: str, fixed: int, lo: int, hi: int):
        if orientation == "v":
            cands = self.element_keys_near(fixed, fixed, lo, hi)
        else:
            cands = self.element_keys_near(lo, hi, fixed, fixed)
        for key in cands:
            ex0, ex1, ey0, ey1 = key
            if orientation == "v":
                if not (ex0 < fixed < ex1):
                    continue
                if hi <= ey0 or lo >= ey1:
                    continue
                if not (lo <= ey0 and ey1 <= hi):  # pragma: no cover
                    raise RuntimeError("meshline ends inside an element interior")
                self._remove_element(key)
                self._add_element((ex0, fixed, ey0, ey1))
                self._add_element((fixed, ex1, ey0, ey1))
            else:
                if not (ey0 < fixed < ey1):
                    continue
                if hi <= ex0 or lo >= ex1:
                    continue
                if not (lo <= ex0 and ex1 <= hi):  # pragma: no cover
                    raise RuntimeError("meshline ends inside an element interior")
                self._remove_element(key)
                self._add_element((ex0, ex1, ey0, fixed))
                self._add_element((ex0, ex1, fixed, ey1))

    def _insert_ticks(self, orientation: str, fixed: int, lo: int, hi: int, mult: int):
        """Validated merge; returns newly covered pieces."""
        p_cross = self.bidegree[0] if orientation == "v" else self.bidegree[1]
        if mult > p_cross + 1:
            raise ValueError(f"multiplicity {mult} exceeds degree+1 = {p_cross + 1}")
        if not (0 <= fixed <= self.nticks and 0 <= lo < hi <= self.nticks):
            raise ValueError("meshline outside domain")
        for at in (lo, hi):
            if not self._point_supported(orientation, fixed, at):
                raise ValueError(
                    f"meshline endpoint at tick {at} hangs inside an element")
        return self._merge_segment(orientation, fixed, lo, hi, mult)

    def insert_line(self, line: MeshLine):
        """Mutating insert (tick-snapped).  Prefer :func:`insert_meshline`."""
        if line.orientation == "v":
            fixed = self.snap_x(line.fixed)
            lo, hi = self.snap_y(line.start), self.snap_y(line.stop)
        else:
            fixed = self.snap_y(line.fixed)
            lo, hi = self.snap_x(line.start), self.snap_x(line.stop)
        return self._insert_ticks(line.orientation, fixed, lo, hi, line.multiplicity)

    # -- misc -------------------------------------------------------------

    def copy(self) -> "LRMesh":
        m = object.__new__(LRMesh)
        m.domain = self.domain
        m.bidegree = self.bidegree
        m.cells = self.cells
        m.scale = self.scale
        m.nticks = self.nticks
        m._segs = {o: {c: list(v) for c, v in d.items()} for o, d in self._segs.items()}
        m._coords = {o: list(v) for o, v in self._coords.items()}
        m._elems = set(self._elems)
        m._ebuckets = {k: set(v) for k, v in self._ebuckets.items()}
        return m

    def meshlines(self) -> list[MeshLine]:
        out = []
        for o in ("v", "h"):
            of = self.x_of if o == "v" else self.y_of
            along = self.y_of if o == "v" else self.x_of
            for c in self._coords[o]:
                for s, e, m in self._segs[o][c]:
                    out.append(MeshLine(o, of(c), along(s), along(e), m))
        return out

    def to_text(self) -> str:
        x0, x1, y0, y1 = self.domain
        head = [
            f"# domain {x0:.17g} {x1:.17g} {y0:.17g} {y1:.17g}",
            f"# bidegree {self.bidegree[0]} {self.bidegree[1]}",
            f"# cells {self.cells}",
        ]
        rows = [
            f"{ln.orientation} {ln.fixed:.17g} {ln.start:.17g} {ln.stop:.17g} {ln.multiplicity}"
            for ln in self.meshlines()
        ]
        return "\n".join(head + rows) + "\n"

    @staticmethod
    def from_text(text: str) -> "LRMesh":
        domain = bidegree = cells = None
        pending = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "domain":
                    domain = tuple(float(v) for v in parts[1:5])
                elif parts and parts[0] == "bidegree":
                    bidegree = (int(parts[1]), int(parts[2]))
                elif parts and parts[0] == "cells":
                    cells = int(parts[1])
                continue
            o, fx, s, e, m = line.split()
            pending.append(MeshLine(o, float(fx), float(s), float(e), int(m)))
        if domain is None or bidegree is None or cells is None:
            raise ValueError("mesh text lacks domain/bidegree/cells header")
        mesh = LRMesh(domain, cells, bidegree)
        # Lines may reference transversal lines appearing later in the file.
        while pending:
            progressed = False
            remaining = []
            for ln in pending:
                try:
                    mesh.insert_line(ln)
                    progressed = True
                except ValueError:
                    remaining.append(ln)
            if not progressed:
                raise ValueError("mesh text contains hanging meshlines")
            pending = remaining
        return mesh


def init_tensor_mesh(domain, cells_per_dir: int, bidegree: tuple[int, int]) -> LRMesh:
    """Uniform tensor mesh; boundary lines carry open-knot multiplicity p+1."""
    return LRMesh(domain, cells_per_dir, bidegree)


def insert_meshline(mesh: LRMesh, line: MeshLine) -> LRMesh:
    """Return a copy of ``mesh`` with ``line`` merged in.

    Collinear overlaps merge with multiplicity = max of the parts; elements
    crossed by newly covered pieces are split.
    """
    out = mesh.copy()
    out.insert_line(line)
    return out


def elements(mesh: LRMesh) -> list[Element]:
    """All elements as disjoint open boxes tiling the domain."""
    return [mesh.element_view(k) for k in sorted(mesh._elems)]


def find_element(mesh: LRMesh, x: float, y: float) -> Element:
    """Element whose closure contains (x, y); lower-left wins on shared edges."""
    return mesh.element_view(mesh.find_element_key(x, y))
