"""Structured quadrilateral meshes, polyline cracks, and enrichment classification.

The mesh is a uniform Cartesian grid of quadrilateral elements.  Mesh sizes are
given as NODE counts per axis (an "N x N mesh" has N*N nodes and (N-1)^2
elements), matching the degree-of-freedom bookkeeping used by the benchmark
harness.  Cracks are open polylines; each crack tip carries the tangent
direction of its final segment, pointing out of the material toward the tip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ON_CRACK_REL_TOL = 1e-12  # times h: points closer than this count as on the crack


class ConfigurationError(ValueError):
    """Crack/enrichment layout that cannot be processed consistently."""


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Mesh:
    """Uniform grid of (nx-1)*(ny-1) square elements on [x0,x0+lx]x[y0,y0+ly].

    Node numbering is row-major: node id = iy*nx + ix.  Element numbering is
    row-major over element cells: elem id = ey*(nx-1) + ex.
    """

    nx: int
    ny: int
    x0: float
    y0: float
    lx: float
    ly: float

    @property
    def h(self) -> float:
        return self.lx / (self.nx - 1)

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    @property
    def n_elems(self) -> int:
        return (self.nx - 1) * (self.ny - 1)

    @property
    def shape_elems(self) -> tuple[int, int]:
        return (self.nx - 1, self.ny - 1)

    def node_xy(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes)
        ix = nodes % self.nx
        iy = nodes // self.nx
        return np.stack([self.x0 + ix * self.h, self.y0 + iy * self.h], axis=-1)

    def all_node_xy(self) -> np.ndarray:
        xs = self.x0 + np.arange(self.nx) * self.h
        ys = self.y0 + np.arange(self.ny) * self.h
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def elem_of_point(self, x: float, y: float) -> int:
        """Element whose cell contains (x, y); points on grid lines go to the
        upper-index cell except on the far boundary."""
        ex = min(max(int((x - self.x0) / self.h), 0), self.nx - 2)
        ey = min(max(int((y - self.y0) / self.h), 0), self.ny - 2)
        return ey * (self.nx - 1) + ex

    def elem_cell(self, e: int) -> tuple[int, int]:
        return (e % (self.nx - 1), e // (self.nx - 1))

    def elem_nodes(self, e: int) -> np.ndarray:
        """Node ids counterclockwise from the lower-left corner."""
        ex, ey = self.elem_cell(e)
        n0 = ey * self.nx + ex
        return np.array([n0, n0 + 1, n0 + self.nx + 1, n0 + self.nx])

    def elem_rect(self, e: int) -> tuple[float, float, float, float]:
        ex, ey = self.elem_cell(e)
        xa = self.x0 + ex * self.h
        ya = self.y0 + ey * self.h
        return (xa, ya, xa + self.h, ya + self.h)

    def boundary_nodes(self) -> np.ndarray:
        ix = np.arange(self.nx)
        iy = np.arange(self.ny)
        bottom = ix
        top = (self.ny - 1) * self.nx + ix
        left = iy[1:-1] * self.nx
        right = iy[1:-1] * self.nx + self.nx - 1
        return np.unique(np.concatenate([bottom, top, left, right]))

    def contains(self, xy, tol: float = 0.0) -> bool:
        x, y = float(xy[0]), float(xy[1])
        return (self.x0 - tol <= x <= self.x0 + self.lx + tol
                and self.y0 - tol <= y <= self.y0 + self.ly + tol)


def build_mesh(nx: int, ny: int, origin=(0.0, 0.0), extents=(1.0, 1.0)) -> Mesh:
    """Create a uniform node grid; element size must match along both axes."""
    nx, ny = int(nx), int(ny)
    lx, ly = float(extents[0]), float(extents[1])
    if nx < 2 or ny < 2:
        raise ValueError(f"node counts must be >= 2, got {nx}x{ny}")
    if lx <= 0 or ly <= 0:
        raise ValueError(f"extents must be positive, got {lx}x{ly}")
    hx = lx / (nx - 1)
    hy = ly / (ny - 1)
    if abs(hx - hy) > 1e-12 * max(hx, hy):
        raise ValueError(f"grid must be uniform: hx={hx} != hy={hy}")
    return Mesh(nx=nx, ny=ny, x0=float(origin[0]), y0=float(origin[1]), lx=lx, ly=ly)


# ---------------------------------------------------------------------------
# cracks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TipRecord:
    """One crack tip: owning crack, which polyline endpoint, position, and the
    tangent angle of the final segment pointing toward (and past) the tip."""

    crack: int
    end: int            # 0 = first polyline vertex, 1 = last
    xy: tuple[float, float]
    angle: float        # radians

    @property
    def point(self) -> np.ndarray:
        return np.asarray(self.xy, dtype=float)


class CrackSet:
    """A set of polyline cracks with an explicit list of enriched tips."""

    def __init__(self, polylines, tips):
        self.cracks = [np.asarray(p, dtype=float).reshape(-1, 2) for p in polylines]
        for i, p in enumerate(self.cracks):
            if p.shape[0] < 2:
                raise ValueError(f"crack {i} needs >= 2 vertices")
            if np.any(np.linalg.norm(np.diff(p, axis=0), axis=1) == 0.0):
                raise ValueError(f"crack {i} has a zero-length segment")
        self.tips: list[TipRecord] = []
        for crack, end in tips:
            self.tips.append(self._make_tip(int(crack), int(end)))

    def _make_tip(self, crack: int, end: int) -> TipRecord:
        p = self.cracks[crack]
        if end == 0:
            xy, t = p[0], p[0] - p[1]
        elif end == 1:
            xy, t = p[-1], p[-1] - p[-2]
        else:
            raise ValueError("tip endpoint id must be 0 or 1")
        return TipRecord(crack=crack, end=end, xy=(float(xy[0]), float(xy[1])),
                         angle=math.atan2(t[1], t[0]))

    @classmethod
    def auto_tips(cls, polylines, domain: Mesh, boundary_tol: float = None) -> "CrackSet":
        """Tips are the polyline endpoints strictly inside the domain; endpoints
        on the boundary are crack mouths and stay unenriched."""
        if boundary_tol is None:
            boundary_tol = 1e-9 * domain.h
        tips = []
        for c, p in enumerate(polylines):
            p = np.asarray(p, dtype=float)
            for end, xy in ((0, p[0]), (1, p[-1])):
                d = min(xy[0] - domain.x0, domain.x0 + domain.lx - xy[0],
                        xy[1] - domain.y0, domain.y0 + domain.ly - xy[1])
                if d > boundary_tol:
                    tips.append((c, end))
        return cls(polylines, tips)

    @property
    def n_tips(self) -> int:
        return len(self.tips)

    def mouths(self):
        """Polyline endpoints that are not tips (crack exits the material)."""
        tip_ends = {(t.crack, t.end) for t in self.tips}
        out = []
        for c, p in enumerate(self.cracks):
            for end, xy in ((0, p[0]), (1, p[-1])):
                if (c, end) not in tip_ends:
                    out.append((c, end, xy.copy()))
        return out


def _nearest_on_segment(x, a, b):
    ab = b - a
    t = np.dot(x - a, ab) / np.dot(ab, ab)
    t = min(max(t, 0.0), 1.0)
    p = a + t * ab
    return p, float(np.linalg.norm(x - p)), t


def nearest_point(x, polyline) -> tuple[np.ndarray, float, int, float]:
    """Closest point on a polyline: (point, distance, segment index, segment t)."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(polyline, dtype=float)
    best = (None, math.inf, -1, 0.0)
    for s in range(p.shape[0] - 1):
        q, d, t = _nearest_on_segment(x, p[s], p[s + 1])
        if d < best[1]:
            best = (q, d, s, t)
    return best


def _segment_normal(a, b) -> np.ndarray:
    """Unit normal to the negative crack face (left of the walking direction)."""
    t = b - a
    n = np.array([-t[1], t[0]])
    return n / np.linalg.norm(n)


def crack_side(x, polyline) -> int:
    """Heaviside sign of ``x`` relative to a polyline crack.

    Returns +1 when (x - x_c) . n >= 0 for the nearest crack point x_c, with n
    the unit normal to the negative face, else -1.  At a kink vertex the
    normals of the meeting segments are averaged (angle-bisector rule).
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(polyline, dtype=float)
    q, _, s, t = nearest_point(x, p)
    if 0.0 < t < 1.0 or p.shape[0] == 2:
        n = _segment_normal(p[s], p[s + 1])
    else:
        # nearest point is a vertex; blend the adjacent segment normals
        vid = s if t == 0.0 else s + 1
        normals = []
        if vid > 0:
            normals.append(_segment_normal(p[vid - 1], p[vid]))
        if vid < p.shape[0] - 1:
            normals.append(_segment_normal(p[vid], p[vid + 1]))
        n = np.add.reduce(normals)
        nn = np.linalg.norm(n)
        if nn < 1e-14:  # 180-degree fold-back; fall back to one side
            n = normals[0]
        else:
            n = n / nn
    return 1 if float(np.dot(x - q, n)) >= 0.0 else -1


def crack_distance(x, polyline) -> float:
    return nearest_point(x, polyline)[1]


def tip_polar(x, tip: TipRecord) -> tuple[float, float]:
    """Polar coordinates of ``x`` in the tip frame.

    r is the distance to the tip; theta in (-pi, pi] is measured from the tip
    tangent so theta = +/-pi lies on the crack faces (+pi on the positive face).
    r = 0 returns (0, 0) by convention.
    """
    tx = np.asarray(x, dtype=float) - tip.point
    r = float(np.hypot(tx[0], tx[1]))
    if r == 0.0:
        return 0.0, 0.0
    c, s = math.cos(tip.angle), math.sin(tip.angle)
    xl = c * tx[0] + s * tx[1]
    yl = -s * tx[0] + c * tx[1]
    theta = math.atan2(yl, xl)
    if theta == -math.pi:
        theta = math.pi
    return r, theta


def clip_segment_to_rect(a, b, rect):
    """Liang-Barsky clip of segment a->b against rect (xa, ya, xb, yb).

    Returns (p0, p1) clipped endpoints or None when outside.
    """
    xa, ya, xb, yb = rect
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    t0, t1 = 0.0, 1.0
    for p, q in ((-d[0], a[0] - xa), (d[0], xb - a[0]),
                 (-d[1], a[1] - ya), (d[1], yb - a[1])):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        t = q / p
        if p < 0.0:
            if t > t1:
                return None
            t0 = max(t0, t)
        else:
            if t < t0:
                return None
            t1 = min(t1, t)
    if t0 > t1:
        return None
    return a + t0 * d, a + t1 * d


# ---------------------------------------------------------------------------
# enrichment classification
# ---------------------------------------------------------------------------

# element tip classes
CLASS_U, CLASS_T, CLASS_B = 0, 1, 2
_CLASS_NAMES = {CLASS_U: "U", CLASS_T: "T", CLASS_B: "B"}


@dataclass(frozen=True)
class EnrichmentMode:
    """Crack-tip enrichment rule: fixed radius or fixed element layers."""

    kind: str                 # "geometrical" | "topological"
    r_tip: float = 0.0        # geometrical radius (meters)
    layers: int = 1           # topological rings around the tip element

    def __post_init__(self):
        if self.kind not in ("geometrical", "topological"):
            raise ValueError(f"unknown enrichment mode {self.kind!r}")
        if self.kind == "geometrical" and self.r_tip <= 0.0:
            raise ValueError("geometrical mode needs r_tip > 0")
        if self.kind == "topological" and self.layers < 0:
            raise ValueError("topological mode needs layers >= 0")

    @classmethod
    def geometrical(cls, r_tip: float) -> "EnrichmentMode":
        return cls(kind="geometrical", r_tip=float(r_tip))

    @classmethod
    def topological(cls, layers: int = 1) -> "EnrichmentMode":
        return cls(kind="topological", layers=int(layers))


class EnrichmentMap:
    """Per-element and per-node classification of the enriched domains.

    Element tip classes: U (no branch-enriched node), T (all four nodes
    enriched by one tip), B (blending: some nodes enriched).  Whether an
    element is cut by a crack is carried as an orthogonal flag; cut elements
    without a tip inside form the Heaviside domain.
    """

    def __init__(self, mesh: Mesh, cracks: CrackSet, mode: EnrichmentMode):
        self.mesh = mesh
        self.cracks = cracks
        self.mode = mode
        ne = mesh.n_elems

        self.elem_tip = np.full(ne, -1, dtype=np.int64)     # tip contained, -1 if none
        self.elem_crossed = np.zeros(ne, dtype=bool)        # crack geometry inside
        self.elem_cut = np.zeros(ne, dtype=bool)            # crossed and no tip inside
        self.elem_tip_class = np.full(ne, CLASS_U, dtype=np.uint8)
        self.elem_cracks: dict[int, list[int]] = {}         # elem -> crossing crack ids

        self._place_tips()
        self._mark_crossed()
        self._build_tip_sets()
        self._build_heaviside_sets()
        self._validate()

    # -- construction -------------------------------------------------------

    def _place_tips(self):
        mesh = self.mesh
        for tid, tip in enumerate(self.cracks.tips):
            if not mesh.contains(tip.xy, tol=1e-9 * mesh.h):
                raise ConfigurationError(f"tip {tid} at {tip.xy} outside the mesh domain")
            e = mesh.elem_of_point(*tip.xy)
            if self.elem_tip[e] >= 0:
                raise ConfigurationError(f"tips {self.elem_tip[e]} and {tid} share element {e}")
            self.elem_tip[e] = tid

    def _candidate_elems(self, a, b):
        """Element cells overlapped by the bounding box of segment a->b."""
        mesh = self.mesh
        h = mesh.h
        exa = int(np.floor((min(a[0], b[0]) - mesh.x0) / h)) - 1
        exb = int(np.floor((max(a[0], b[0]) - mesh.x0) / h)) + 1
        eya = int(np.floor((min(a[1], b[1]) - mesh.y0) / h)) - 1
        eyb = int(np.floor((max(a[1], b[1]) - mesh.y0) / h)) + 1
        exa, exb = max(exa, 0), min(exb, mesh.nx - 2)
        eya, eyb = max(eya, 0), min(eyb, mesh.ny - 2)
        for ey in range(eya, eyb + 1):
            for ex in range(exa, exb + 1):
                yield ey * (mesh.nx - 1) + ex

    def _mark_crossed(self):
        mesh = self.mesh
        tol = 1e-12 * mesh.h
        for cid, poly in enumerate(self.cracks.cracks):
            for v in poly:
                if not mesh.contains(v, tol=1e-9 * mesh.h):
                    raise ConfigurationError(f"crack {cid} vertex {v} outside the mesh domain")
            touched = set()
            for s in range(poly.shape[0] - 1):
                for e in self._candidate_elems(poly[s], poly[s + 1]):
                    if e in touched:
                        continue
                    clip = clip_segment_to_rect(poly[s], poly[s + 1], mesh.elem_rect(e))
                    if clip is None:
                        continue
                    if np.linalg.norm(clip[1] - clip[0]) <= tol:
                        continue
                    touched.add(e)
            for e in touched:
                # require actual separation: nodes on both sides (points on the
                # line count for either side, which keeps corner grazing out)
                xy = mesh.node_xy(mesh.elem_nodes(e))
                sides = {crack_side(p, poly) for p in xy
                         if crack_distance(p, poly) > tol}
                has_tip_of_c = (self.elem_tip[e] >= 0
                                and self.cracks.tips[self.elem_tip[e]].crack == cid)
                if len(sides) == 2 or has_tip_of_c:
                    self.elem_crossed[e] = True
                    self.elem_cracks.setdefault(e, []).append(cid)
        self.elem_cut = self.elem_crossed & (self.elem_tip < 0)

    def _tip_window_nodes(self, tip: TipRecord, radius: float) -> np.ndarray:
        mesh = self.mesh
        h = mesh.h
        ixa = max(int(np.floor((tip.xy[0] - radius - mesh.x0) / h)), 0)
        ixb = min(int(np.ceil((tip.xy[0] + radius - mesh.x0) / h)), mesh.nx - 1)
        iya = max(int(np.floor((tip.xy[1] - radius - mesh.y0) / h)), 0)
        iyb = min(int(np.ceil((tip.xy[1] + radius - mesh.y0) / h)), mesh.ny - 1)
        ix, iy = np.meshgrid(np.arange(ixa, ixb + 1), np.arange(iya, iyb + 1))
        return (iy * mesh.nx + ix).ravel()

    def _build_tip_sets(self):
        mesh = self.mesh
        self.tip_nodes: list[np.ndarray] = []       # N_tip per tip (sorted)
        self.tip_full_elems: list[np.ndarray] = []  # all 4 nodes enriched by this tip
        self.tip_region_elems: list[np.ndarray] = []  # >= 1 node enriched by this tip
        n_enriched = np.zeros(mesh.n_nodes, dtype=bool)
        for tid, tip in enumerate(self.cracks.tips):
            if self.mode.kind == "geometrical":
                cand = self._tip_window_nodes(tip, self.mode.r_tip + mesh.h)
                d = np.linalg.norm(mesh.node_xy(cand) - tip.point, axis=1)
                nodes = np.sort(cand[d <= self.mode.r_tip])
            else:
                e = mesh.elem_of_point(*tip.xy)
                ex, ey = mesh.elem_cell(e)
                k = self.mode.layers
                exa, exb = max(ex - k, 0), min(ex + k, mesh.nx - 2)
                eya, eyb = max(ey - k, 0), min(ey + k, mesh.ny - 2)
                ids = []
                for jy in range(eya, eyb + 2):
                    for jx in range(exa, exb + 2):
                        ids.append(jy * mesh.nx + jx)
                nodes = np.unique(np.array(ids, dtype=np.int64))
            if nodes.size == 0:
                raise ConfigurationError(f"tip {tid}: no nodes inside the enrichment region")
            self.tip_nodes.append(nodes)
            n_enriched[nodes] = True

            in_set = np.zeros(mesh.n_nodes, dtype=bool)
            in_set[nodes] = True
            full, region = [], []
            seen = set()
            for nid in nodes:
                ix, iy = nid % mesh.nx, nid // mesh.nx
                for jx in (ix - 1, ix):
                    for jy in (iy - 1, iy):
                        if 0 <= jx <= mesh.nx - 2 and 0 <= jy <= mesh.ny - 2:
                            e = jy * (mesh.nx - 1) + jx
                            if e in seen:
                                continue
                            seen.add(e)
                            mask = in_set[mesh.elem_nodes(e)]
                            if mask.all():
                                full.append(e)
                            if mask.any():
                                region.append(e)
            self.tip_full_elems.append(np.sort(np.array(full, dtype=np.int64)))
            self.tip_region_elems.append(np.sort(np.array(region, dtype=np.int64)))

        full_any = np.zeros(mesh.n_elems, dtype=bool)
        region_any = np.zeros(mesh.n_elems, dtype=bool)
        for full, region in zip(self.tip_full_elems, self.tip_region_elems):
            full_any[full] = True
            region_any[region] = True
        self.elem_tip_class[region_any] = CLASS_B
        self.elem_tip_class[full_any] = CLASS_T
        self._node_enriched = n_enriched

    def _build_heaviside_sets(self):
        mesh = self.mesh
        owner = {}
        for e, cids in sorted(self.elem_cracks.items()):
            if not self.elem_cut[e]:
                continue
            for nid in mesh.elem_nodes(e):
                nid = int(nid)
                if nid not in owner or min(cids) < owner[nid]:
                    owner[nid] = min(cids)
        # Heaviside never touches nodes of tip-containing elements; the branch
        # term phi^1 carries the jump there.
        for e in np.flatnonzero(self.elem_tip >= 0):
            for nid in mesh.elem_nodes(e):
                owner.pop(int(nid), None)
        self.heav_owner = owner
        self.heav_nodes = np.array(sorted(owner), dtype=np.int64)

    def _validate(self):
        eff_r = (self.mode.r_tip if self.mode.kind == "geometrical"
                 else (self.mode.layers + 1.0) * self.mesh.h * math.sqrt(2.0))
        for cid, end, xy in self.cracks.mouths():
            d = min(xy[0] - self.mesh.x0, self.mesh.x0 + self.mesh.lx - xy[0],
                    xy[1] - self.mesh.y0, self.mesh.y0 + self.mesh.ly - xy[1])
            if d > 1e-9 * self.mesh.h:
                raise ConfigurationError(
                    f"crack {cid} endpoint {end} at {tuple(xy)} is interior but not a tip")
            for tid, tip in enumerate(self.cracks.tips):
                if np.linalg.norm(xy - tip.point) <= eff_r:
                    raise ConfigurationError(
                        f"crack {cid} exits the domain inside the enrichment region of tip {tid}")

    # -- queries -------------------------------------------------------------

    def overall_class(self, e: int) -> str:
        name = _CLASS_NAMES[int(self.elem_tip_class[e])]
        if self.elem_tip[e] >= 0:
            return name  # tip element reads as its tip class (T normally)
        if self.elem_cut[e]:
            return "H" if name == "U" else name + "+H"
        return name

    def enriched_elems(self) -> np.ndarray:
        """Elements carrying branch enrichment (tip class T or B)."""
        return np.flatnonzero(self.elem_tip_class != CLASS_U)

    def tip_node_mask(self, tid: int, e: int) -> np.ndarray:
        """Which of element e's four nodes are enriched by tip tid."""
        nodes = self.mesh.elem_nodes(e)
        tset = self.tip_nodes[tid]
        return np.isin(nodes, tset)

    def elem_tips(self, e: int) -> list[int]:
        """Tips whose N_tip intersects element e's nodes."""
        out = []
        for tid in range(self.cracks.n_tips):
            if np.isin(self.mesh.elem_nodes(e), self.tip_nodes[tid]).any():
                out.append(tid)
        return out

    def heaviside_sign(self, nid: int) -> int:
        """H at a Heaviside-enriched node, relative to its owning crack."""
        cid = self.heav_owner[int(nid)]
        return crack_side(self.mesh.node_xy(int(nid)), self.cracks.cracks[cid])


def classify(mesh: Mesh, cracks: CrackSet, mode: EnrichmentMode) -> EnrichmentMap:
    """Classify every element/node of the mesh against the crack set."""
    return EnrichmentMap(mesh, cracks, mode)
