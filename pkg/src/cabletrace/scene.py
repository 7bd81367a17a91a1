"""Ground-truth cable scenes: Bezier cable paths, crossings and z-order."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo

DENSE_SPACING = 1.5
MERGE_RADIUS = 2.0
MIN_CROSSING_ANGLE = np.deg2rad(12.0)
# random draws only: distinct crossings at least a trace merge radius apart, and
# strands closer than TOUCH_GAP must be near a crossing
CROSSING_SPACING = 6.0
TOUCH_GAP = 4.0
TOUCH_REACH = 12.0
# endpoints keep this far from every strand not leading into them
ENDPOINT_CLEARANCE = 20.0
DEFAULT_CANVAS = (512, 512)
DEFAULT_THICKNESS = 8.0

METHODS = ("exclusion_radius", "near_parallel", "spatial_constraint")


class GenerationError(RuntimeError):
    """Raised when a scene or cable cannot be produced under the given constraints."""


class SemiPlanarViolation(GenerationError):
    """More than two strands meet at one place, or two strands touch tangentially."""


@dataclass
class CablePath:
    """One cable as a C1 cubic Bezier chain plus its dense sampling."""

    control_points: np.ndarray
    thickness: float = DEFAULT_THICKNESS
    id: int = 0
    anchors: np.ndarray | None = field(default=None, repr=False, compare=False)
    info: dict = field(default_factory=dict, repr=False, compare=False)
    points: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.control_points = geo.as_points(self.control_points)
        self.points = geo.sample_bezier_chain(self.control_points, DENSE_SPACING)

    @classmethod
    def from_anchors(cls, anchors, thickness=DEFAULT_THICKNESS, id=0, **info):
        anchors = geo.as_points(anchors)
        return cls(geo.catmull_rom_to_bezier(anchors), float(thickness), int(id),
                   anchors=anchors, info=info)

    @property
    def length(self) -> float:
        return geo.polyline_length(self.points)

    def transformed(self, matrix, offset) -> "CablePath":
        ctrl = self.control_points @ np.asarray(matrix).T + np.asarray(offset)
        return CablePath(ctrl, self.thickness, self.id)


@dataclass(frozen=True)
class CrossingGT:
    """A ground-truth crossing between two strands.

    ``strand_a``/``strand_b`` are ``(cable id, dense segment index)`` with
    ``t_a``/``t_b`` the fractional position inside that segment; ``a`` is the
    strand that comes first in ``(cable id, arc index)`` order.
    """

    position: tuple
    strand_a: tuple
    strand_b: tuple
    t_a: float
    t_b: float
    over: str

    @property
    def over_strand(self) -> tuple:
        return self.strand_a if self.over == "a" else self.strand_b

    @property
    def under_strand(self) -> tuple:
        return self.strand_b if self.over == "a" else self.strand_a

    def sign_for(self, cable: int, index: float) -> str:
        """``"O"`` or ``"U"`` for the visit of ``cable`` nearest arc index ``index``."""
        da = abs(self.strand_a[1] + self.t_a - index) if self.strand_a[0] == cable else np.inf
        db = abs(self.strand_b[1] + self.t_b - index) if self.strand_b[0] == cable else np.inf
        side = "a" if da <= db else "b"
        return "O" if side == self.over else "U"


@dataclass
class GeometricCrossing:
    position: np.ndarray
    strand_a: tuple
    strand_b: tuple
    t_a: float
    t_b: float
    angle: float


def _cluster(points: np.ndarray, radius: float) -> list[list[int]]:
    parent = list(range(len(points)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    if len(points) > 1:
        for i, j in cKDTree(points).query_pairs(radius):
            parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(len(points)):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: min(g))


def find_crossings(cables, merge_radius: float = MERGE_RADIUS) -> list[GeometricCrossing]:
    """Geometric crossings of all cable pairs (self-pairs included), deduplicated.

    Raises :class:`SemiPlanarViolation` when a merged cluster does not consist of
    exactly two strand visits, or when two strands meet at a grazing angle.
    """
    raw = []
    for ia, ca in enumerate(cables):
        for cb in cables[ia:]:
            same = cb is ca
            hits = geo.polyline_intersections(ca.points, None if same else cb.points)
            for i, j, t, u, p in hits:
                raw.append((ca.id, i, t, cb.id, j, u, p))
    if not raw:
        return []
    pts = np.array([r[6] for r in raw])
    out = []
    for group in _cluster(pts, merge_radius):
        visits = []
        for k in group:
            ca, i, t, cb, j, u, _ = raw[k]
            visits.append((ca, i + t))
            visits.append((cb, j + u))
        merged = []
        for cable, s in sorted(visits):
            if merged and merged[-1][0] == cable and s - merged[-1][1] <= 3.0:
                continue
            merged.append((cable, s))
        if len(merged) != 2:
            raise SemiPlanarViolation(
                f"{len(merged)} strands meet near {pts[group[0]].round(1).tolist()}")
        spread = np.ptp(pts[group], axis=0).max() if len(group) > 1 else 0.0
        if spread > 1e-6:
            raise SemiPlanarViolation(
                f"strands touch repeatedly near {pts[group[0]].round(1).tolist()}")
        ca, i, t, cb, j, u, p = raw[group[0]]
        (ca, sa), (cb, sb) = merged
        cab = {c.id: c for c in cables}
        da = geo.tangent_at(cab[ca].points, int(sa))
        db = geo.tangent_at(cab[cb].points, int(sb))
        angle = float(np.arccos(np.clip(abs(da @ db), 0.0, 1.0)))
        if angle < MIN_CROSSING_ANGLE:
            raise SemiPlanarViolation(
                f"grazing crossing ({np.degrees(angle):.1f} deg) near {p.round(1).tolist()}")
        ia_, ib_ = int(np.floor(sa)), int(np.floor(sb))
        ia_ = min(ia_, len(cab[ca].points) - 2)
        ib_ = min(ib_, len(cab[cb].points) - 2)
        out.append(GeometricCrossing(
            position=np.asarray(p, dtype=float),
            strand_a=(ca, ia_), strand_b=(cb, ib_),
            t_a=float(sa - ia_), t_b=float(sb - ib_), angle=angle))
    out.sort(key=lambda c: (c.strand_a[0], c.strand_a[1] + c.t_a))
    return out


@dataclass
class Scene:
    """Cables on a canvas plus the over/under assignment of every crossing.

    ``z_order[k]`` names the strand (``"a"`` or ``"b"``) that lies on top at the
    k-th crossing in canonical order (see :func:`find_crossings`).
    """

    canvas: tuple = DEFAULT_CANVAS
    cables: list = field(default_factory=list)
    z_order: list = field(default_factory=list)
    template: str | None = None
    code: str | None = None
    knot_crossings: list = field(default_factory=list)
    _crossings: list | None = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.canvas = (int(self.canvas[0]), int(self.canvas[1]))
        w, h = self.canvas
        for c in self.cables:
            c.points = np.clip(c.points, [0.0, 0.0], [w - 1.0, h - 1.0])

    @property
    def width(self) -> int:
        return self.canvas[0]

    @property
    def height(self) -> int:
        return self.canvas[1]

    @property
    def endpoints(self) -> list:
        return [(c.points[0].copy(), c.points[-1].copy()) for c in self.cables]

    def cable(self, cable_id: int) -> CablePath:
        for c in self.cables:
            if c.id == cable_id:
                return c
        raise KeyError(cable_id)

    @property
    def crossings_gt(self) -> list:
        if self._crossings is None:
            self._crossings = ground_truth_crossings(self)
        return self._crossings

    def crossing_sequence(self, cable_id: int = 0) -> list:
        """Encounters along one cable: ``(arc index, crossing index, sign)``."""
        seq = []
        for k, c in enumerate(self.crossings_gt):
            for side, strand, t in (("a", c.strand_a, c.t_a), ("b", c.strand_b, c.t_b)):
                if strand[0] == cable_id:
                    seq.append((strand[1] + t, k, "O" if c.over == side else "U"))
        seq.sort()
        return seq

    def code_string(self, cable_id: int = 0) -> str:
        """Gauss-like code along one cable, ids numbered by first appearance."""
        ids: dict[int, int] = {}
        parts = []
        for _, k, sign in self.crossing_sequence(cable_id):
            ids.setdefault(k, len(ids) + 1)
            parts.append(f"{sign}{ids[k]}")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {
            "canvas": list(self.canvas),
            "cables": [
                {"id": c.id, "thickness": c.thickness,
                 "control_points": np.round(c.control_points, 6).tolist()}
                for c in self.cables
            ],
            "z_order": list(self.z_order),
            "endpoints": [[np.round(a, 6).tolist(), np.round(b, 6).tolist()]
                          for a, b in self.endpoints],
            "template": self.template,
            "code": self.code,
            "knot_crossings": list(self.knot_crossings),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        cables = [CablePath(np.array(c["control_points"]), c["thickness"], c["id"])
                  for c in d["cables"]]
        return cls(tuple(d["canvas"]), cables, list(d["z_order"]), d.get("template"),
                   d.get("code"), list(d.get("knot_crossings", [])))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Scene":
        return cls.from_dict(json.loads(Path(path).read_text()))


def ground_truth_crossings(scene: Scene) -> list[CrossingGT]:
    geom = find_crossings(scene.cables)
    if len(geom) != len(scene.z_order):
        raise GenerationError(
            f"scene has {len(geom)} crossings but {len(scene.z_order)} z-order entries")
    return [
        CrossingGT(tuple(map(float, g.position)), g.strand_a, g.strand_b, g.t_a, g.t_b, z)
        for g, z in zip(geom, scene.z_order)
    ]


def random_z_order(n: int, rng: np.random.Generator) -> list[str]:
    return ["a" if b else "b" for b in rng.random(n) < 0.5]


def make_scene(cables, canvas=DEFAULT_CANVAS, z_order=None, rng=None, **meta) -> Scene:
    """Build a scene, drawing a random z-order when none is given."""
    geom = find_crossings(cables)
    if z_order is None:
        rng = np.random.default_rng() if rng is None else rng
        z_order = random_z_order(len(geom), rng)
    return Scene(tuple(canvas), list(cables), list(z_order), **meta)


# --------------------------------------------------------------------------
# random cable sampling

_DEFAULTS = {
    "exclusion_radius": dict(n_anchors=10, exclusion_radius=30.0, step=(40.0, 90.0),
                             turn_sigma=0.9, margin=20.0, max_tries=2000,
                             thickness=DEFAULT_THICKNESS),
    "near_parallel": dict(offset=8.0, lead_anchors=4, section_length=140.0, step=(45.0, 70.0),
                          margin=30.0, max_tries=2000, thickness=DEFAULT_THICKNESS),
    "spatial_constraint": dict(region_center=None, region_radius=60.0, region_anchors=10,
                               region_exclusion=0.25,
                               lead=(60.0, 140.0), margin=20.0, max_tries=2000,
                               thickness=DEFAULT_THICKNESS),
}


class _Budget:
    def __init__(self, n):
        self.left = int(n)

    def spend(self):
        self.left -= 1
        if self.left < 0:
            raise GenerationError("rejection-sampling budget exhausted")


def _inside(p, canvas, margin) -> bool:
    w, h = canvas
    return margin <= p[0] <= w - 1 - margin and margin <= p[1] <= h - 1 - margin


def _check_room(canvas, margin):
    w, h = canvas
    if w - 1 - 2 * margin <= 0 or h - 1 - 2 * margin <= 0:
        raise GenerationError("rejection-sampling budget exhausted: canvas has no room")


def _exclusion_walk(rng, canvas, n, radius, step, turn_sigma, margin, budget,
                    start=None, heading=None, avoid=(), max_turn=np.deg2rad(100.0)):
    w, h = canvas
    anchors = []
    if start is None:
        while True:
            budget.spend()
            p = rng.uniform([margin, margin], [w - 1 - margin, h - 1 - margin])
            if all(np.linalg.norm(p - q) >= radius for q in avoid):
                break
    else:
        p = np.asarray(start, dtype=float)
    anchors.append(p)
    heading = rng.uniform(0, 2 * np.pi) if heading is None else heading
    stuck = 0
    while len(anchors) < n:
        budget.spend()
        stuck += 1
        if stuck > 100:
            # boxed in: restart the walk from its first anchor
            del anchors[1:]
            heading, stuck = rng.uniform(0, 2 * np.pi), 0
        th = heading + rng.normal(0.0, turn_sigma)
        q = anchors[-1] + rng.uniform(*step) * np.array([np.cos(th), np.sin(th)])
        if not _inside(q, canvas, margin):
            heading = rng.uniform(0, 2 * np.pi)
            continue
        if any(np.linalg.norm(q - a) < radius for a in list(anchors) + list(avoid)):
            continue
        if len(anchors) >= 2:
            u, v = anchors[-1] - anchors[-2], q - anchors[-1]
            # sharp reversals give Catmull-Rom cusps
            if u @ v < np.cos(max_turn) * np.linalg.norm(u) * np.linalg.norm(v):
                continue
        anchors.append(q)
        heading, stuck = th, 0
    return np.array(anchors)


def sample_cable(rng_seed, method: str = "exclusion_radius", canvas=DEFAULT_CANVAS,
                 params: dict | None = None, cable_id: int = 0) -> CablePath:
    """Sample one random cable path with one of the three Bezier recipes.

    ``exclusion_radius`` keeps every anchor outside a radius of all earlier
    anchors; ``near_parallel`` folds back a stretch of the cable at a small
    lateral offset; ``spatial_constraint`` packs a run of anchors into a disc.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    cfg = dict(_DEFAULTS[method])
    cfg.update(params or {})
    rng = np.random.default_rng(rng_seed)
    canvas = (int(canvas[0]), int(canvas[1]))
    _check_room(canvas, cfg["margin"])
    budget = _Budget(cfg["max_tries"])
    if method == "exclusion_radius":
        anchors = _exclusion_walk(rng, canvas, cfg["n_anchors"], cfg["exclusion_radius"],
                                  cfg["step"], cfg["turn_sigma"], cfg["margin"], budget)
        return CablePath.from_anchors(anchors, cfg["thickness"], cable_id)
    if method == "near_parallel":
        return _near_parallel(rng, canvas, cfg, budget, cable_id)
    return _spatial_constraint(rng, canvas, cfg, budget, cable_id)


def _near_parallel(rng, canvas, cfg, budget, cable_id) -> CablePath:
    offset = float(cfg["offset"])
    margin = cfg["margin"]
    while True:
        lead = _exclusion_walk(rng, canvas, cfg["lead_anchors"], 40.0, cfg["step"], 0.35,
                               margin, budget)
        heading = np.arctan2(*(lead[-1] - lead[-2])[::-1])
        bend = rng.normal(0.0, 0.004)
        n_sec = max(int(cfg["section_length"] // 14), 3)
        sec = [lead[-1]]
        for _ in range(n_sec):
            heading += bend * 14
            sec.append(sec[-1] + 14 * np.array([np.cos(heading), np.sin(heading)]))
        sec = np.array(sec)
        tang = np.gradient(sec, axis=0)
        tang /= np.linalg.norm(tang, axis=1, keepdims=True)
        side = rng.choice([-1.0, 1.0])
        normal = side * np.stack([-tang[:, 1], tang[:, 0]], axis=1)
        back = (sec + offset * normal)[::-1]
        away = normal[0]
        tail = [back[-1] + away * d for d in (30.0, 65.0)]
        anchors = np.vstack([lead[:-1], sec, back[:-1], tail])
        if all(_inside(p, canvas, margin) for p in anchors):
            return CablePath.from_anchors(anchors, cfg["thickness"], cable_id,
                                          parallel_section=(sec, back[::-1]))
        budget.spend()


def _spatial_constraint(rng, canvas, cfg, budget, cable_id) -> CablePath:
    w, h = canvas
    margin = cfg["margin"]
    rad = float(cfg["region_radius"])
    near, far = cfg["lead"]
    reach = rad + far + margin
    inner = rad / 2.5
    while True:
        budget.spend()
        if cfg["region_center"] is None:
            if w - 2 * reach <= 0 or h - 2 * reach <= 0:
                c = np.array([w / 2, h / 2])
            else:
                c = rng.uniform([reach, reach], [w - reach, h - reach])
        else:
            c = np.asarray(cfg["region_center"], dtype=float)
        a_in = rng.uniform(0, 2 * np.pi)
        u_in = np.array([np.cos(a_in), np.sin(a_in)])
        # the packed run is a turn-limited walk that stays in the disc
        region = [c + u_in * rad * rng.uniform(0.6, 0.9)]
        heading = a_in + np.pi + rng.normal(0.0, 0.5)
        tries = 0
        while len(region) < cfg["region_anchors"] and tries < 200:
            tries += 1
            th = heading + rng.normal(0.0, 1.0)
            q = region[-1] + rng.uniform(inner, 2 * inner) * np.array([np.cos(th), np.sin(th)])
            if np.linalg.norm(q - c) > rad or any(np.linalg.norm(q - p) < cfg["region_exclusion"] * rad for p in region):
                continue
            if len(region) >= 2:
                u, v = region[-1] - region[-2], q - region[-1]
                if u @ v < np.cos(np.deg2rad(100.0)) * np.linalg.norm(u) * np.linalg.norm(v):
                    continue
            region.append(q)
            heading = th
        if len(region) < cfg["region_anchors"]:
            continue
        d = region[-1] - c
        u_out = d / max(np.linalg.norm(d), 1e-9)
        anchors = np.vstack([c + u_in * (rad + far), c + u_in * (rad + near), region,
                             c + u_out * (rad + near), c + u_out * (rad + far)])
        if all(_inside(p, canvas, margin) for p in anchors):
            return CablePath.from_anchors(anchors, cfg["thickness"], cable_id,
                                          region=(c, rad))


def _region_centres(rng, canvas, cfg, n):
    """Disc centres for ``n`` packed cables, far enough apart that the discs stay disjoint."""
    w, h = canvas
    rad = float(cfg["region_radius"])
    # leads are redrawn until they fit, so only the disc itself needs room
    reach = rad + cfg["lead"][0] + cfg["margin"]
    lo = np.minimum([reach, reach], [w / 2, h / 2])
    hi = np.maximum([w - reach, h - reach], lo)
    out = []
    for _ in range(200 * n):
        q = rng.uniform(lo, hi)
        if all(np.linalg.norm(q - p) >= 2 * rad + 2 * cfg["thickness"] for p in out):
            out.append(q)
            if len(out) == n:
                return out
    return None


def endpoint_clearance(scene: Scene, own_skip: float = 30.0) -> float:
    """Smallest distance from any endpoint to a strand not leading into it."""
    best = np.inf
    for c in scene.cables:
        cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(c.points, axis=0), axis=1))])
        for end, far in ((c.points[0], cum > own_skip), (c.points[-1], cum < cum[-1] - own_skip)):
            for o in scene.cables:
                pts = o.points[far] if o is c else o.points
                if len(pts):
                    best = min(best, float(np.min(np.linalg.norm(pts - end, axis=1))))
    return best


def degeneracy(scene: Scene) -> str | None:
    """Why a random scene is ambiguous to trace, or None.

    Two crossings closer than ``CROSSING_SPACING`` merge on a stepped trace, and
    strands running closer than ``TOUCH_GAP`` without crossing render as one.
    An endpoint near another strand makes the start or finish ambiguous.
    """
    if scene.cables and endpoint_clearance(scene) < ENDPOINT_CLEARANCE:
        return "endpoint too close to another strand"
    cps = np.array([c.position for c in scene.crossings_gt]).reshape(-1, 2)
    if len(cps) > 1:
        d = np.linalg.norm(cps[:, None] - cps[None], axis=2)
        d[np.diag_indices(len(cps))] = np.inf
        if d.min() < CROSSING_SPACING:
            return f"crossings {d.min():.1f} px apart"
    pts, owner, arc = [], [], []
    for c in scene.cables:
        pts.append(c.points)
        owner.append(np.full(len(c.points), c.id))
        arc.append(geo.cumulative_length(c.points))
    pts, owner, arc = np.vstack(pts), np.concatenate(owner), np.concatenate(arc)
    pairs = cKDTree(pts).query_pairs(TOUCH_GAP, output_type="ndarray")
    if len(pairs) == 0:
        return None
    a, b = pairs[:, 0], pairs[:, 1]
    far = (owner[a] != owner[b]) | (np.abs(arc[a] - arc[b]) > 2.5 * TOUCH_REACH)
    mid = 0.5 * (pts[a[far]] + pts[b[far]])
    if not len(mid):
        return None
    near = cKDTree(cps).query(mid)[0] if len(cps) else np.full(len(mid), np.inf)
    if np.any(near > TOUCH_REACH):
        k = int(np.argmax(near))
        return f"strands touch without crossing near {mid[k].round(1).tolist()}"
    return None


def generate_random_scene(seed, method: str = "exclusion_radius", canvas=DEFAULT_CANVAS,
                          n_cables: int = 1, params: dict | None = None,
                          max_attempts: int = 200) -> Scene:
    """Random scene with ``n_cables`` cables; degenerate draws are rejected and redrawn."""
    ss = np.random.SeedSequence(seed)
    for child in ss.spawn(max_attempts):
        seeds = child.spawn(n_cables + 2)
        per = [params] * n_cables
        cfg = dict(_DEFAULTS[method], **(params or {})) if method in _DEFAULTS else {}
        if method == "spatial_constraint" and n_cables > 1 and cfg["region_center"] is None:
            centres = _region_centres(np.random.default_rng(seeds[-2]), canvas, cfg, n_cables)
            if centres is None:
                continue
            per = [dict(params or {}, region_center=tuple(c)) for c in centres]
        try:
            cables = [sample_cable(s, method, canvas, per[i], cable_id=i)
                      for i, s in enumerate(seeds[:n_cables])]
            scene = make_scene(cables, canvas, rng=np.random.default_rng(seeds[-1]))
            if degeneracy(scene) is None:
                return scene
        except SemiPlanarViolation:
            continue
    raise GenerationError(f"no valid {method} scene after {max_attempts} attempts")
