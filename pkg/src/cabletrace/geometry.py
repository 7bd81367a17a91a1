"""Planar polyline helpers shared by the scene generator and the perception stack.

Points are ``(x, y)`` pairs in pixel units, with ``x`` the column and ``y`` the
row of the image array.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

_EPS = 1e-12


def as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) array of points, got shape {arr.shape}")
    return arr


def cumulative_length(points) -> np.ndarray:
    """Arc length from the first point to every point of the polyline."""
    pts = as_points(points)
    if len(pts) == 0:
        return np.zeros(0)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def polyline_length(points) -> float:
    s = cumulative_length(points)
    return float(s[-1]) if len(s) else 0.0


def point_at_length(points, s, cum=None) -> np.ndarray:
    """Linearly interpolate positions at arc lengths ``s`` (scalar or array)."""
    pts = as_points(points)
    cum = cumulative_length(pts) if cum is None else cum
    s = np.clip(np.asarray(s, dtype=float), 0.0, cum[-1])
    x = np.interp(s, cum, pts[:, 0])
    y = np.interp(s, cum, pts[:, 1])
    return np.stack([x, y], axis=-1)


def resample_polyline(points, spacing: float) -> np.ndarray:
    """Resample at (nearly) uniform arc-length spacing, keeping both ends."""
    pts = as_points(points)
    cum = cumulative_length(pts)
    total = cum[-1]
    if total < _EPS:
        return pts[:1].copy()
    n = max(int(np.ceil(total / spacing)), 1)
    return point_at_length(pts, np.linspace(0.0, total, n + 1), cum)


def catmull_rom_to_bezier(anchors) -> np.ndarray:
    """Control points of the C1 cubic Bezier chain interpolating ``anchors``.

    Returns ``3 * (len(anchors) - 1) + 1`` control points. End tangents are
    one-sided.
    """
    a = as_points(anchors)
    if len(a) < 2:
        raise ValueError("need at least two anchors")
    padded = np.vstack([2 * a[0] - a[1], a, 2 * a[-1] - a[-2]])
    ctrl = [a[0]]
    for i in range(len(a) - 1):
        p0, p1, p2, p3 = padded[i], padded[i + 1], padded[i + 2], padded[i + 3]
        ctrl.append(p1 + (p2 - p0) / 6.0)
        ctrl.append(p2 - (p3 - p1) / 6.0)
        ctrl.append(p2)
    return np.array(ctrl)


def sample_bezier_chain(ctrl, spacing: float = 1.5) -> np.ndarray:
    """Densely sample a cubic Bezier chain and resample it to ``spacing``."""
    c = as_points(ctrl)
    if (len(c) - 1) % 3 != 0 or len(c) < 4:
        raise ValueError("a cubic chain needs 3n+1 control points")
    pieces = []
    for k in range(0, len(c) - 1, 3):
        p0, p1, p2, p3 = c[k:k + 4]
        hull = np.linalg.norm(p1 - p0) + np.linalg.norm(p2 - p1) + np.linalg.norm(p3 - p2)
        m = max(int(np.ceil(hull / (spacing * 0.25))), 4)
        t = np.linspace(0.0, 1.0, m + 1)[:, None]
        if pieces:
            t = t[1:]
        mt = 1.0 - t
        pieces.append(mt**3 * p0 + 3 * mt**2 * t * p1 + 3 * mt * t**2 * p2 + t**3 * p3)
    return resample_polyline(np.vstack(pieces), spacing)


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def intersect_segment_pairs(p0, p1, q0, q1):
    """Vectorised intersection of segment pairs ``p0p1`` and ``q0q1``.

    Returns ``(hit, t, u, points)`` where ``t`` and ``u`` are the parameters
    along the first and second segment. Parallel pairs never hit. Endpoints
    are inclusive.
    """
    p0, p1, q0, q1 = (np.asarray(v, dtype=float) for v in (p0, p1, q0, q1))
    r = p1 - p0
    s = q1 - q0
    denom = r[..., 0] * s[..., 1] - r[..., 1] * s[..., 0]
    qp = q0 - p0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[..., 0] * s[..., 1] - qp[..., 1] * s[..., 0]) / denom
        u = (qp[..., 0] * r[..., 1] - qp[..., 1] * r[..., 0]) / denom
        pts = p0 + t[..., None] * r
    hit = (np.abs(denom) > _EPS) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    return hit, t, u, pts


def candidate_segment_pairs(a, b=None, reach: float | None = None) -> np.ndarray:
    """Index pairs of segments whose midpoints are close enough to intersect.

    With ``b`` omitted the pairs are within ``a`` itself and ordered ``i < j``.
    """
    a = as_points(a)
    mid_a = 0.5 * (a[1:] + a[:-1])
    half_a = 0.5 * np.linalg.norm(np.diff(a, axis=0), axis=1)
    if b is None:
        if len(mid_a) < 2:
            return np.zeros((0, 2), dtype=int)
        radius = 2 * half_a.max() + 1e-9 if reach is None else reach
        pairs = cKDTree(mid_a).query_pairs(radius, output_type="ndarray")
        return np.sort(pairs, axis=1) if len(pairs) else np.zeros((0, 2), dtype=int)
    b = as_points(b)
    mid_b = 0.5 * (b[1:] + b[:-1])
    half_b = 0.5 * np.linalg.norm(np.diff(b, axis=0), axis=1)
    if len(mid_a) == 0 or len(mid_b) == 0:
        return np.zeros((0, 2), dtype=int)
    radius = half_a.max() + half_b.max() + 1e-9 if reach is None else reach
    hits = cKDTree(mid_a).query_ball_tree(cKDTree(mid_b), radius)
    pairs = [(i, j) for i, js in enumerate(hits) for j in js]
    return np.array(pairs, dtype=int).reshape(-1, 2)


def polyline_intersections(a, b=None, min_gap: int = 2):
    """All intersections between polyline ``a`` and ``b`` (or ``a`` with itself).

    For self-intersections, segment pairs closer than ``min_gap`` indices are
    ignored (adjacent segments always share a vertex). Returns a list of
    ``(i, j, t, u, point)`` sorted by ``(i + t, j + u)``.
    """
    a = as_points(a)
    other = a if b is None else as_points(b)
    pairs = candidate_segment_pairs(a, b)
    if b is None and len(pairs):
        pairs = pairs[pairs[:, 1] - pairs[:, 0] >= min_gap]
    if len(pairs) == 0:
        return []
    i, j = pairs[:, 0], pairs[:, 1]
    hit, t, u, pts = intersect_segment_pairs(a[i], a[i + 1], other[j], other[j + 1])
    out = [(int(i[k]), int(j[k]), float(t[k]), float(u[k]), pts[k]) for k in np.flatnonzero(hit)]
    out.sort(key=lambda h: (h[0] + h[2], h[1] + h[3]))
    return out


def project_to_polyline(point, points, cum=None):
    """Closest point on a polyline: ``(distance, arc_length, segment_index)``."""
    pts = as_points(points)
    cum = cumulative_length(pts) if cum is None else cum
    p = np.asarray(point, dtype=float)
    a, d = pts[:-1], np.diff(pts, axis=0)
    dd = np.einsum("ij,ij->i", d, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(dd > _EPS, np.einsum("ij,ij->i", p - a, d) / dd, 0.0)
    t = np.clip(t, 0.0, 1.0)
    proj = a + t[:, None] * d
    dist = np.linalg.norm(proj - p, axis=1)
    k = int(np.argmin(dist))
    return float(dist[k]), float(cum[k] + t[k] * np.sqrt(dd[k])), k


def tangent_at(points, index: int) -> np.ndarray:
    """Unit tangent at a vertex: central difference, one-sided at the ends."""
    pts = as_points(points)
    lo = max(index - 1, 0)
    hi = min(index + 1, len(pts) - 1)
    v = pts[hi] - pts[lo]
    n = np.linalg.norm(v)
    return v / n if n > _EPS else np.array([1.0, 0.0])
