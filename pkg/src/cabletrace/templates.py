"""Canonical single-cable knot and non-knot scenes with known crossing codes.

Knotted shapes are built as opened closures of braids (strands wound around a
centre and swapped in angular sectors) or from the parametric trefoil. Every
template carries its Gauss-like code along the cable from the designated start
(the first dense point); the z-order of the scene is derived from that code
after checking that the geometry visits the crossings in the same id order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .scene import (DEFAULT_CANVAS, DEFAULT_THICKNESS, CablePath, GenerationError, Scene,
                    find_crossings)


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _braid_loop(word, n_strands, r0, dr, window=0.5, step=0.004):
    """Polar samples ``(phi, r)`` of the closure of a braid, started on the outer level."""
    m = len(word)
    level = n_strands - 1
    phis, radii = [], []
    for turn in range(n_strands):
        for k, gen in enumerate(word):
            a0 = 2 * np.pi * (turn * m + k) / m
            phi = a0 + np.arange(0.0, 2 * np.pi / m, step)
            i = abs(gen)
            if level in (i - 1, i):
                other = i if level == i - 1 else i - 1
                centre = a0 + np.pi / m
                width = window * 2 * np.pi / m
                r = r0 + dr * (level + (other - level) * _smoothstep((phi - centre) / width + 0.5))
                level = other
            else:
                r = np.full_like(phi, r0 + dr * level)
            phis.append(phi)
            radii.append(r)
    if level != n_strands - 1:
        raise ValueError("braid closure has more than one component")
    return np.concatenate(phis), np.concatenate(radii)


def _opened(points, radius_out, cut, tails, spacing=16.0):
    """Anchors of a closed loop opened at angle 0 with two leads pulled outward."""
    head = [(radius_out + t) * np.array([np.cos(cut * 0.6), np.sin(cut * 0.6)]) for t in tails[::-1]]
    tail = [(radius_out + t) * np.array([np.cos(-cut * 0.6), np.sin(-cut * 0.6)]) for t in tails]
    return np.vstack([head, geo.resample_polyline(points, spacing), tail])


def _braid_anchors(word, n_strands, r0, dr, cut=0.3, tails=(30.0, 62.0, 95.0)):
    phi, r = _braid_loop(word, n_strands, r0, dr)
    keep = (phi > cut) & (phi < 2 * np.pi * n_strands - cut)
    pts = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)[keep]
    return _opened(pts, r0 + dr * (n_strands - 1), cut, tails)


def _trefoil_anchors(size=38.0, tails=(30.0, 62.0, 95.0)):
    # Parametric trefoil, rotated so an outer lobe tip sits on the +x axis.
    t = np.linspace(0.0, 2 * np.pi, 4000, endpoint=False)
    x = np.sin(t) + 2 * np.sin(2 * t)
    y = np.cos(t) - 2 * np.cos(2 * t)
    r = np.hypot(x, y)
    k = int(np.argmax(r))
    rot = geo.rotation_matrix(-np.arctan2(y[k], x[k]))
    pts = (np.stack([x, y], axis=1) @ rot.T) * size
    pts = np.roll(pts, -k, axis=0)
    ang = np.arctan2(pts[:, 1], pts[:, 0])
    cut = 0.22
    i0 = int(np.argmax(np.abs(ang) > cut))
    i1 = len(pts) - int(np.argmax(np.abs(ang[::-1]) > cut))
    return _opened(pts[i0:i1], r[k] * size, cut, tails)


def _straight_anchors():
    return np.stack([np.linspace(-180, 180, 7), np.zeros(7)], axis=1)


def _s_curve_anchors():
    x = np.linspace(-180, 180, 13)
    return np.stack([x, 70 * np.sin(np.pi * x / 180)], axis=1)


def _fake_loop_anchors(a=24.0, b=55.0):
    th = np.linspace(-np.pi, np.pi, 200)
    loop = np.stack([a * th - b * np.sin(th), b * np.cos(th)], axis=1)
    y_end = loop[0, 1]
    lead = np.array([[-200.0, y_end], [-140.0, y_end]])
    tail = np.array([[140.0, y_end], [200.0, y_end]])
    return np.vstack([lead, geo.resample_polyline(loop, 16.0), tail])


def _coil_anchors(r_outer=95.0, r_inner=45.0):
    # Two spiral turns inwards; the inner end is pulled straight out across both.
    phi = np.linspace(0.0, 4 * np.pi - 0.9, 600)
    r = r_outer - (r_outer - r_inner) * phi / (4 * np.pi)
    spiral = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    lead = np.array([[230.0, -70.0], [165.0, -40.0]])
    exit_ = np.array([[10.0, -8.0], [-60.0, 0.0], [-140.0, 0.0], [-230.0, 0.0]])
    return np.vstack([lead, geo.resample_polyline(spiral, 16.0), exit_])


@dataclass(frozen=True)
class TemplateSpec:
    name: str
    code: str
    knot_ids: tuple
    min_feature: float
    knotted: bool
    fake: bool = False

    def anchors(self) -> np.ndarray:
        return _BUILDERS[self.name]()


_BUILDERS = {
    "straight": _straight_anchors,
    "s_curve": _s_curve_anchors,
    "overhand": lambda: _braid_anchors([1, 1, 1], 2, 50.0, 34.0),
    "cinquefoil": lambda: _braid_anchors([1, 1, 1, 1, 1], 2, 58.0, 34.0),
    "figure_eight": lambda: _braid_anchors([1, -2, 1, -2], 3, 40.0, 30.0),
    "trefoil_closed_analogue": _trefoil_anchors,
    "fake_loop": _fake_loop_anchors,
    "fake_double_loop": _coil_anchors,
    "fake_overhand": lambda: _braid_anchors([1, 1, 1], 2, 50.0, 34.0),
}

TEMPLATES = {
    t.name: t for t in [
        TemplateSpec("straight", "", (), np.inf, False),
        TemplateSpec("s_curve", "", (), np.inf, False),
        TemplateSpec("overhand", "U1 O2 U3 O1 U2 O3", (1,), 34.0, True),
        TemplateSpec("cinquefoil", "U1 O2 U3 O4 U5 O1 U2 O3 U4 O5", (1,), 34.0, True),
        TemplateSpec("figure_eight", "U1 O2 U3 O1 U4 O3 U2 O4", (1,), 30.0, True),
        TemplateSpec("trefoil_closed_analogue", "U1 O2 U3 O1 U2 O3", (1,), 38.0, True),
        TemplateSpec("fake_loop", "O1 U1", (), 40.0, False),
        TemplateSpec("fake_double_loop", "U1 U2 O2 O1", (), 25.0, False, fake=True),
        TemplateSpec("fake_overhand", "U1 O2 O3 O1 U2 U3", (), 34.0, False, fake=True),
    ]
}

KNOTTED = tuple(n for n, t in TEMPLATES.items() if t.knotted)
TRIVIAL = tuple(n for n, t in TEMPLATES.items() if not t.knotted)
FAKE_KNOTS = tuple(n for n, t in TEMPLATES.items() if t.fake)


def parse_code(code: str) -> list[tuple[str, int]]:
    """``"U1 O2"`` -> ``[("U", 1), ("O", 2)]``."""
    return [(tok[0], int(tok[1:])) for tok in code.split()]


def template_cable(name: str, scale=1.0, pose=(0.0, 0.0, 0.0),
                   thickness=DEFAULT_THICKNESS, cable_id=0) -> CablePath:
    """The template's cable placed by ``pose = (cx, cy, theta)``."""
    spec = TEMPLATES[name]
    cx, cy, theta = pose
    anchors = spec.anchors() * float(scale) @ geo.rotation_matrix(theta).T + [cx, cy]
    return CablePath.from_anchors(anchors, thickness, cable_id)


def code_z_order(cable: CablePath, crossings, code: str, name: str = "") -> list[str]:
    """Map a code onto geometric crossings of one cable; checks the id order."""
    encounters = []
    for k, c in enumerate(crossings):
        for side, strand, t in (("a", c.strand_a, c.t_a), ("b", c.strand_b, c.t_b)):
            if strand[0] == cable.id:
                encounters.append((strand[1] + t, k, side))
    encounters.sort()
    tokens = parse_code(code)
    if len(tokens) != len(encounters):
        raise GenerationError(
            f"{name}: geometry has {len(encounters) // 2} crossings, code expects "
            f"{len(tokens) // 2} (scale or pose too tight?)")
    first_id: dict[int, int] = {}
    z = {}
    for (_, k, side), (sign, cid) in zip(encounters, tokens):
        first_id.setdefault(k, len(first_id) + 1)
        if first_id[k] != cid:
            raise GenerationError(f"{name}: geometry visits crossings in another order")
        if sign == "O":
            z[k] = side
    return [z[k] for k in range(len(crossings))]


def knot_template(name: str, scale=1.0, pose=None, canvas=DEFAULT_CANVAS,
                  thickness=DEFAULT_THICKNESS, margin=6.0) -> Scene:
    """Scene holding one template cable whose crossing code equals the stored one.

    ``pose`` defaults to the canvas centre with no rotation.
    """
    if name not in TEMPLATES:
        raise ValueError(f"unknown template {name!r}; expected one of {sorted(TEMPLATES)}")
    spec = TEMPLATES[name]
    if spec.min_feature * scale < 2.0 * thickness:
        raise GenerationError(
            f"{name}: scale {scale} too small for thickness {thickness} (strokes merge)")
    w, h = canvas
    pose = (w / 2.0, h / 2.0, 0.0) if pose is None else pose
    cable = template_cable(name, scale, pose, thickness)
    pts = cable.points
    if (pts.min() < margin or pts[:, 0].max() > w - 1 - margin
            or pts[:, 1].max() > h - 1 - margin):
        raise GenerationError(f"{name}: template does not fit the canvas at this pose")
    crossings = find_crossings([cable])
    z = code_z_order(cable, crossings, spec.code, name)
    ids = _first_ids(cable, crossings)
    knot_crossings = [ids[i] for i in spec.knot_ids]
    return Scene(tuple(canvas), [cable], z, template=name, code=spec.code,
                 knot_crossings=knot_crossings)


def _first_ids(cable, crossings) -> dict[int, int]:
    """Code id -> canonical crossing index."""
    enc = []
    for k, c in enumerate(crossings):
        for strand, t in ((c.strand_a, c.t_a), (c.strand_b, c.t_b)):
            if strand[0] == cable.id:
                enc.append((strand[1] + t, k))
    enc.sort()
    ids: dict[int, int] = {}
    for _, k in enc:
        if k not in ids.values():
            ids[len(ids) + 1] = k
    return ids


def template_extent(name: str, scale=1.0) -> float:
    """Radius of the template around its centre, in pixels."""
    a = geo.sample_bezier_chain(geo.catmull_rom_to_bezier(TEMPLATES[name].anchors() * scale))
    return float(np.linalg.norm(a, axis=1).max())


def random_pose(rng, name, scale, canvas=DEFAULT_CANVAS, margin=10.0):
    """Uniform rotation and a translation keeping the template inside the canvas."""
    w, h = canvas
    ext = template_extent(name, scale) + margin
    lo = np.array([ext, ext])
    hi = np.array([w - ext, h - ext])
    centre = np.where(hi > lo, rng.uniform(lo, np.maximum(hi, lo + 1e-9)), [w / 2, h / 2])
    return float(centre[0]), float(centre[1]), float(rng.uniform(0, 2 * np.pi))
