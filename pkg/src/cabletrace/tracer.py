"""Autoregressive cable tracing on grayscale images.

The tracer repeatedly crops a window around the newest trace point, rotates it
so the last step points along +x, asks a predictor for a heatmap over the next
point, rotates the heatmap back and takes its global argmax.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import geometry as geo

STEP = 12.0
CROP_SIZE = 64
CONTEXT_LEN = 3
PREFIX_LEN = 4
CABLE_THRESHOLD = 100.0

TERMINATIONS = ("endpoint_reached", "workspace_exit", "retrace_detected", "step_budget",
                "predictor_stop")


class TraceError(RuntimeError):
    """Raised when tracing cannot start or continue."""


class PredictorFailure(TraceError):
    """A predictor produced an all-zero heatmap without signalling termination."""


@dataclass
class NormalizedCrop:
    """A rotated square window around the last trace point.

    ``rotation`` is the heading of the last context step in image coordinates;
    crop pixel ``(u, v)`` maps to ``center + R(rotation) @ ((u, v) - size / 2)``.
    """

    crop: np.ndarray
    context_channel: np.ndarray
    rotation: float
    center: np.ndarray
    source_context: np.ndarray
    size: int = CROP_SIZE

    @property
    def origin(self) -> float:
        return self.size / 2.0

    def to_source(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return self.center + (uv - self.origin) @ geo.rotation_matrix(self.rotation).T

    def to_crop(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return (xy - self.center) @ geo.rotation_matrix(-self.rotation).T + self.origin

    @property
    def context(self) -> np.ndarray:
        return self.to_crop(self.source_context)


@dataclass
class PredictorOutput:
    heatmap: np.ndarray
    terminate: bool = False


class Predictor(Protocol):
    name: str

    def predict(self, crop: NormalizedCrop) -> PredictorOutput: ...


def sample_image(image, xy, background=0.0, order=1) -> np.ndarray:
    """Bilinear samples of ``image`` at ``(x, y)`` positions (any leading shape)."""
    xy = np.asarray(xy, dtype=float)
    flat = xy.reshape(-1, 2)
    vals = ndimage.map_coordinates(np.asarray(image, dtype=float), [flat[:, 1], flat[:, 0]],
                                   order=order, mode="constant", cval=background)
    return vals.reshape(xy.shape[:-1])


def _draw_gradient(channel, pts, levels):
    size = channel.shape[0]
    for a, b, la, lb in zip(pts[:-1], pts[1:], levels[:-1], levels[1:]):
        n = max(int(np.ceil(np.linalg.norm(b - a) * 4)), 1)
        t = np.linspace(0.0, 1.0, n + 1)
        seg = a + t[:, None] * (b - a)
        lv = la + t * (lb - la)
        ij = np.round(seg).astype(int)
        ok = (ij >= 0).all(axis=1) & (ij < size).all(axis=1)
        np.maximum.at(channel, (ij[ok, 1], ij[ok, 0]), lv[ok])
    for p, lv in zip(pts, levels):
        u, v = np.round(p).astype(int)
        if 0 <= u < size and 0 <= v < size:
            channel[v, u] = lv


def normalize_crop(image, context, size: int = CROP_SIZE, background: float = 0.0
                   ) -> NormalizedCrop:
    """Rotate and crop ``image`` around the last context point.

    Out-of-image pixels take the ``background`` value. The context channel holds
    the context polyline with intensity fading linearly from newest (1.0) to
    oldest (1/k).
    """
    ctx = geo.as_points(context)
    if len(ctx) < 2:
        raise ValueError("normalize_crop needs at least two context points")
    d = ctx[-1] - ctx[-2]
    rotation = float(np.arctan2(d[1], d[0]))
    center = ctx[-1].copy()
    v, u = np.mgrid[0:size, 0:size]
    nc = NormalizedCrop(np.zeros((size, size)), np.zeros((size, size)), rotation, center,
                        ctx.copy(), size)
    src = nc.to_source(np.stack([u, v], axis=-1).astype(float))
    nc.crop = sample_image(image, src, background)
    k = len(ctx)
    _draw_gradient(nc.context_channel, nc.context, np.arange(1, k + 1) / k)
    return nc


def derotate_heatmap(heatmap, crop: NormalizedCrop):
    """Heatmap resampled onto the axis-aligned pixel grid around the rounded centre.

    Returns ``(values, xs, ys)`` where ``values[r, c]`` is the score of source
    pixel ``(xs[c], ys[r])``.
    """
    size = crop.size
    c = np.round(crop.center)
    half = size // 2
    xs = c[0] + np.arange(-half, size - half)
    ys = c[1] + np.arange(-half, size - half)
    gx, gy = np.meshgrid(xs, ys)
    uv = crop.to_crop(np.stack([gx, gy], axis=-1))
    flat = uv.reshape(-1, 2)
    vals = ndimage.map_coordinates(np.asarray(heatmap, dtype=float), [flat[:, 1], flat[:, 0]],
                                   order=1, mode="constant", cval=0.0)
    return vals.reshape(size, size), xs, ys


def _tied(values, rtol=1e-9):
    """Mask of entries equal to the maximum up to float noise.

    Callers average over the tied set instead of taking the first index, so
    plateaus (saturated pixels, symmetric peaks) resolve the same way whatever
    the orientation of the image.
    """
    v = np.asarray(values, dtype=float)
    top = v.max()
    return v >= top - rtol * max(abs(top), 1.0)


def select_next(heatmap, crop: NormalizedCrop) -> np.ndarray:
    """Global argmax of the de-rotated heatmap; tied cells are averaged, then rounded."""
    vals, xs, ys = derotate_heatmap(heatmap, crop)
    if not np.any(vals > 0):
        raise PredictorFailure("predictor heatmap has no positive score")
    r, col = np.nonzero(_tied(vals))
    return np.round(np.array([xs[col].mean(), ys[r].mean()], dtype=float))


def _chord_mean(image, p, dirs, length, background):
    t = np.arange(1.0, length + 0.5, 1.0)
    pts = p[None, None, :] + dirs[:, None, :] * t[None, :, None]
    return sample_image(image, pts, background).mean(axis=1)


def _snap_ridge(image, p, direction, background, reach=2.0):
    normal = np.array([-direction[1], direction[0]])
    offs = np.arange(-reach, reach + 0.25, 0.5)
    cand = p[None, :] + offs[:, None] * normal[None, :]
    vals = sample_image(image, cand, background)
    return cand[_tied(vals)].mean(axis=0)


def _best_direction(dirs, score):
    d = dirs[_tied(score)].sum(axis=0)
    n = np.linalg.norm(d)
    return d / n if n > 1e-9 else dirs[int(np.argmax(score))]


def _border_distance(p, shape):
    h, w = shape
    return min(p[0], p[1], w - 1 - p[0], h - 1 - p[1])


def init_trace(image, start_pixel, endpoint_hint=None, n_points: int = PREFIX_LEN,
               step: float = STEP, threshold: float = CABLE_THRESHOLD,
               background: float | None = None) -> np.ndarray:
    """Analytic ridge-following prefix of ``n_points`` points starting at the start pixel."""
    image = np.asarray(image, dtype=float)
    h, w = image.shape
    bg = float(np.median(image)) if background is None else background
    p = np.asarray(start_pixel, dtype=float)
    r = int(np.ceil(step))
    x0, x1 = int(max(p[0] - r, 0)), int(min(p[0] + r + 1, w))
    y0, y1 = int(max(p[1] - r, 0)), int(min(p[1] + r + 1, h))
    win = image[y0:y1, x0:x1]
    yy, xx = np.mgrid[y0:y1, x0:x1]
    near = (win >= threshold) & ((xx - p[0]) ** 2 + (yy - p[1]) ** 2 <= step**2)
    if not near.any():
        raise TraceError(f"no cable pixels within {step:g} px of start {p.tolist()}")
    if sample_image(image, p, bg) < threshold:
        d2 = np.where(near, (xx - p[0]) ** 2 + (yy - p[1]) ** 2, np.inf)
        k = np.unravel_index(int(np.argmin(d2)), d2.shape)
        p = np.array([xx[k], yy[k]], dtype=float)

    ang = np.deg2rad(np.arange(0, 360, 5))
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    score = _chord_mean(image, p, dirs, step, bg)
    if endpoint_hint is not None:
        away = dirs @ (np.asarray(endpoint_hint, dtype=float) - p) < 0
        direction = _best_direction(dirs[away], score[away])
    else:
        direction = _best_direction(dirs, score)
        opposite = dirs @ direction < 0
        alt = _best_direction(dirs[opposite], score[opposite])
        if score[opposite].max() >= 0.8 * score.max():
            reach = [_border_distance(p + 2 * step * d, image.shape) for d in (direction, alt)]
            direction = direction if reach[0] >= reach[1] else alt
    points = [np.round(p)]
    cur = p
    while len(points) < n_points:
        rel = ang - np.arctan2(direction[1], direction[0])
        fwd = np.cos(rel) >= np.cos(np.deg2rad(60))
        cand = dirs[fwd]
        s = _chord_mean(image, cur, cand, step, bg) / 255.0 + 0.25 * (cand @ direction)
        d = _best_direction(cand, s)
        nxt = _snap_ridge(image, cur + step * d, d, bg)
        nxt = np.round(nxt)
        if not (0 <= nxt[0] < w and 0 <= nxt[1] < h):
            break
        direction = (nxt - points[-1]) / max(np.linalg.norm(nxt - points[-1]), 1e-9)
        points.append(nxt)
        cur = nxt
    if len(points) < 2:
        raise TraceError("analytic initialisation left the image immediately")
    return np.array(points)


def detect_retrace(points, window: int = 5, radius: float = 8.0, angle_deg: float = 30.0,
                   reverse_radius: float = 3.0) -> bool:
    """True when each of the last ``window`` points runs along an earlier part of the trace.

    A point matches when it lies closer than ``radius`` to an earlier trace point
    at least two indices back and the two local directions agree within
    ``angle_deg``. Running back over the same pixels (closer than
    ``reverse_radius``, opposite direction) also matches; a cable folded back on
    itself lies further away than that.
    """
    pts = geo.as_points(points)
    n = len(pts)
    if n < window + 2:
        return False
    cos_lim = np.cos(np.deg2rad(angle_deg))
    for i in range(n - window, n):
        di = pts[i] - pts[i - 1]
        ni = np.linalg.norm(di)
        if ni == 0:
            return False
        earlier = pts[: i - 1]
        if len(earlier) < 2:
            return False
        dist = np.linalg.norm(earlier - pts[i], axis=1)
        js = np.flatnonzero(dist < radius)
        js = js[js + 1 < n]
        if len(js) == 0:
            return False
        dj = pts[js + 1] - pts[js]
        nj = np.linalg.norm(dj, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = (dj @ di) / (nj * ni)
        same = cos >= cos_lim
        back = (cos <= -cos_lim) & (dist[js] < reverse_radius)
        if not np.any(same | back):
            return False
    return True


@dataclass
class TraceConfig:
    max_steps: int = 400
    endpoints: list = field(default_factory=list)
    endpoint_radius: float = 10.0
    workspace: tuple | None = None
    retrace_window: int = 5
    retrace_radius: float = 8.0
    retrace_angle: float = 30.0
    prefix_len: int = PREFIX_LEN
    step: float = STEP
    endpoint_hint: tuple | None = None
    cable_threshold: float = CABLE_THRESHOLD

    def echo(self) -> dict:
        d = asdict(self)
        d["endpoints"] = [list(map(float, e)) for e in self.endpoints]
        return d


@dataclass
class Trace:
    points: np.ndarray
    termination: str
    cable_hint: int | None = None
    provenance: list = field(default_factory=list)
    predictor: str = ""
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def length(self) -> float:
        return geo.polyline_length(self.points)

    def to_dict(self) -> dict:
        return {
            "points": np.asarray(self.points).tolist(),
            "termination": self.termination,
            "cable_hint": self.cable_hint,
            "provenance": list(self.provenance),
            "predictor": self.predictor,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d) -> "Trace":
        return cls(np.array(d["points"], dtype=float).reshape(-1, 2), d["termination"],
                   d.get("cable_hint"), list(d.get("provenance", [])), d.get("predictor", ""),
                   d.get("config", {}))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "Trace":
        return cls.from_dict(json.loads(Path(path).read_text()))


def trace_cable(image, start_pixel, predictor: Predictor, config: TraceConfig | None = None,
                prefix=None, cable_hint: int | None = None) -> Trace:
    """Trace one cable from ``start_pixel`` until a termination condition fires.

    ``prefix`` replaces the analytic initialisation when given.
    """
    config = config or TraceConfig()
    image = np.asarray(image)
    h, w = image.shape
    bg = float(np.median(image))
    x0, y0, x1, y1 = config.workspace or (0, 0, w - 1, h - 1)
    start = np.asarray(start_pixel, dtype=float)
    if prefix is None:
        prefix = init_trace(image, start, config.endpoint_hint, config.prefix_len,
                            config.step, config.cable_threshold, bg)
    points = [np.asarray(p, dtype=float) for p in prefix]
    provenance = ["init"] * len(points)
    ends = [np.asarray(e, dtype=float) for e in config.endpoints]
    ends = [e for e in ends if np.linalg.norm(e - start) > 2 * config.endpoint_radius]

    def finish(reason):
        return Trace(np.array(points), reason, cable_hint, provenance,
                     getattr(predictor, "name", type(predictor).__name__), config.echo())

    def at_endpoint(p):
        return any(np.linalg.norm(p - e) <= config.endpoint_radius for e in ends)

    if any(at_endpoint(p) for p in points[1:]):
        return finish("endpoint_reached")
    for _ in range(config.max_steps):
        crop = normalize_crop(image, np.array(points[-CONTEXT_LEN:]), CROP_SIZE, bg)
        out = predictor.predict(crop)
        if out.terminate:
            return finish("predictor_stop")
        nxt = select_next(out.heatmap, crop)
        if not (x0 <= nxt[0] <= x1 and y0 <= nxt[1] <= y1):
            return finish("workspace_exit")
        points.append(nxt)
        provenance.append("predictor")
        if at_endpoint(nxt):
            return finish("endpoint_reached")
        if detect_retrace(points, config.retrace_window, config.retrace_radius,
                          config.retrace_angle):
            return finish("retrace_detected")
    return finish("step_budget")


def arc_coverage(trace, cable_points, tol: float = 4.0) -> float:
    """Fraction of a ground-truth cable's length within ``tol`` px of the trace polyline.

    A :class:`Trace` that ended with ``endpoint_reached`` is credited with the
    final stretch to the endpoint it reached.
    """
    cable = geo.as_points(cable_points)
    total = geo.polyline_length(cable)
    if isinstance(trace, Trace):
        pts = np.asarray(trace.points, dtype=float)
        if trace.termination == "endpoint_reached":
            end = cable[np.argmin([np.linalg.norm(pts[-1] - cable[0]),
                                   np.linalg.norm(pts[-1] - cable[-1])]) * -1]
            if np.linalg.norm(pts[-1] - end) <= trace.config.get("endpoint_radius", 10.0):
                pts = np.vstack([pts, end])
    else:
        pts = geo.as_points(trace)
    if total <= 0 or len(pts) == 0:
        return 0.0
    fine = geo.resample_polyline(pts, 0.5) if len(pts) > 1 else pts
    dense = geo.resample_polyline(cable, 0.5)
    d, _ = cKDTree(fine).query(dense)
    mid = 0.5 * (d[1:] + d[:-1])
    seg = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    return float(seg[mid <= tol].sum() / total)
