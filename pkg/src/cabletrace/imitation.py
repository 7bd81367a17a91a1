"""Pick/place points expressed relative to a cable trace, and their replay.

A raw point is anchored at the closest point of the trace polyline. Its offset
is stored in the local frame whose x-axis is the trace tangent and whose +y
axis is the tangent turned +90 degrees in (x, y) coordinates, i.e. to its left
in a y-up frame. In image coordinates (y down) that is the visual right: a
rightward trace has +y pointing down the rows.

Replay finds the matching anchor on a new trace either at the same arc length
or at the same fraction between the same two crossing encounters, then
re-applies the offset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo

MAX_DISTANCE = 50.0
MODES = ("absolute_arc_length", "crossing_relative")


class DemoError(ValueError):
    pass


@dataclass
class DemoAction:
    displacement: tuple
    arc_length: float
    crossing_index: int
    kind: str
    fraction: float = 0.0

    def to_dict(self) -> dict:
        return {"displacement": [float(v) for v in self.displacement],
                "arc_length": float(self.arc_length), "crossing_index": int(self.crossing_index),
                "fraction": float(self.fraction), "kind": self.kind}


@dataclass
class Demonstration:
    actions: list = field(default_factory=list)
    mode: str = "absolute_arc_length"

    def __post_init__(self):
        if self.mode not in MODES:
            raise DemoError(f"unknown mode {self.mode!r}")
        for k, a in enumerate(self.actions):
            if a.kind != ("pick" if k % 2 == 0 else "place"):
                raise DemoError("actions must alternate pick, place, pick, ...")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "actions": [a.to_dict() for a in self.actions]}

    @classmethod
    def from_dict(cls, d) -> "Demonstration":
        acts = [DemoAction(tuple(a["displacement"]), a["arc_length"], a["crossing_index"],
                           a["kind"], a.get("fraction", 0.0)) for a in d["actions"]]
        return cls(acts, d["mode"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Demonstration":
        return cls.from_dict(json.loads(Path(path).read_text()))


def vertex_tangents(points) -> np.ndarray:
    pts = geo.as_points(points)
    return np.array([geo.tangent_at(pts, k) for k in range(len(pts))])


def frame_at(points, s, cum=None, tangents=None):
    """Anchor position and unit tangent at arc length ``s``.

    The tangent is interpolated between the central-difference tangents of the
    two vertices bounding the segment.
    """
    pts = geo.as_points(points)
    cum = geo.cumulative_length(pts) if cum is None else cum
    tangents = vertex_tangents(pts) if tangents is None else tangents
    s = float(np.clip(s, 0.0, cum[-1]))
    k = int(np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(pts) - 2))
    span = cum[k + 1] - cum[k]
    t = (s - cum[k]) / span if span > 0 else 0.0
    anchor = pts[k] + t * (pts[k + 1] - pts[k])
    tan = (1 - t) * tangents[k] + t * tangents[k + 1]
    if np.linalg.norm(tan) < 1e-9:
        tan = pts[k + 1] - pts[k]
    return anchor, tan / max(np.linalg.norm(tan), 1e-12)


def _basis(tangent):
    # columns: tangent, and the tangent turned +90 deg in (x, y) coordinates
    return np.column_stack([tangent, [-tangent[1], tangent[0]]])


def encounter_arcs(trace_points, crossings) -> np.ndarray:
    """Arc lengths of all crossing encounters along the trace, sorted."""
    pts = geo.as_points(trace_points)
    cum = geo.cumulative_length(pts)
    params = sorted(e.param for c in crossings for e in c.encounters)
    idx = np.arange(len(pts), dtype=float)
    return np.interp(params, idx, cum) if params else np.zeros(0)


def _bounds(arcs, k, total):
    lo = arcs[k] if k >= 0 else 0.0
    hi = arcs[k + 1] if k + 1 < len(arcs) else total
    return lo, hi


def record(trace_points, crossings, raw_points, mode: str = "absolute_arc_length",
           kinds=None, max_distance: float = MAX_DISTANCE) -> Demonstration:
    """Express raw pick/place points relative to the trace."""
    pts = geo.as_points(trace_points)
    cum = geo.cumulative_length(pts)
    tans = vertex_tangents(pts)
    arcs = encounter_arcs(pts, crossings)
    raw = np.atleast_2d(np.asarray(raw_points, dtype=float))
    kinds = kinds or ["pick" if k % 2 == 0 else "place" for k in range(len(raw))]
    actions = []
    for p, kind in zip(raw, kinds):
        d, s, _ = geo.project_to_polyline(p, pts, cum)
        if d > max_distance:
            raise DemoError(f"point {p.tolist()} is {d:.1f} px from the trace "
                            f"(limit {max_distance:g} px)")
        anchor, tan = frame_at(pts, s, cum, tans)
        disp = _basis(tan).T @ (p - anchor)
        k = int(np.searchsorted(arcs, s, side="right")) - 1
        lo, hi = _bounds(arcs, k, cum[-1])
        frac = (s - lo) / (hi - lo) if hi > lo else 0.0
        actions.append(DemoAction(tuple(disp), s, k, kind, frac))
    return Demonstration(actions, mode)


def replay(demo: Demonstration, new_trace_points, new_crossings=()) -> np.ndarray:
    """Points of ``demo`` transferred onto a new trace."""
    pts = geo.as_points(new_trace_points)
    cum = geo.cumulative_length(pts)
    tans = vertex_tangents(pts)
    arcs = encounter_arcs(pts, new_crossings)
    out = []
    for a in demo.actions:
        if demo.mode == "absolute_arc_length":
            if a.arc_length > cum[-1] + 1e-9:
                raise DemoError(f"trace is {cum[-1]:.1f} px long, action needs "
                                f"{a.arc_length:.1f} px")
            s = a.arc_length
        else:
            if len(arcs) < a.crossing_index + 1:
                raise DemoError(f"action refers to encounter {a.crossing_index}, new trace has "
                                f"{len(arcs)}")
            lo, hi = _bounds(arcs, a.crossing_index, cum[-1])
            s = lo + a.fraction * (hi - lo)
        anchor, tan = frame_at(pts, s, cum, tans)
        out.append(anchor + _basis(tan) @ np.asarray(a.displacement, dtype=float))
    return np.array(out).reshape(-1, 2)
