import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cabletrace import geometry as geo


def brute_force_intersections(pts, min_gap=2):
    """Every segment pair, one at a time, by Cramer's rule."""
    out = []
    n = len(pts) - 1
    for i in range(n):
        for j in range(i + min_gap, n):
            p, r = pts[i], pts[i + 1] - pts[i]
            q, s = pts[j], pts[j + 1] - pts[j]
            den = r[0] * s[1] - r[1] * s[0]
            if abs(den) < 1e-12:
                continue
            t = ((q - p)[0] * s[1] - (q - p)[1] * s[0]) / den
            u = ((q - p)[0] * r[1] - (q - p)[1] * r[0]) / den
            if 0 <= t <= 1 and 0 <= u <= 1:
                out.append(p + t * r)
    return out


def test_analytic_x_crossing():
    a = np.array([[0.0, 0.0], [10.0, 10.0]])
    b = np.array([[0.0, 10.0], [10.0, 0.0]])
    hits = geo.polyline_intersections(a, b)
    assert len(hits) == 1
    np.testing.assert_allclose(hits[0][4], [5.0, 5.0])
    assert hits[0][2] == pytest.approx(0.5) and hits[0][3] == pytest.approx(0.5)


def test_straight_line_has_no_self_crossings():
    pts = np.stack([np.linspace(0, 100, 60), np.zeros(60)], axis=1)
    assert geo.polyline_intersections(pts) == []


def test_parallel_segments_never_hit():
    hit, *_ = geo.intersect_segment_pairs([0, 0], [1, 0], [0, 1], [1, 1])
    assert not hit


@given(st.integers(0, 10_000), st.integers(5, 40))
@settings(max_examples=60, deadline=None)
def test_self_intersections_match_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    pts = np.cumsum(rng.normal(0, 10, (n, 2)), axis=0)
    fast = [h[4] for h in geo.polyline_intersections(pts)]
    slow = brute_force_intersections(pts)
    assert len(fast) == len(slow)
    for p in slow:
        assert min(np.linalg.norm(np.asarray(fast) - p, axis=1)) < 1e-6


def test_catmull_rom_interpolates_anchors():
    anchors = np.array([[0, 0], [50, 20], [90, -10], [140, 30]], float)
    ctrl = geo.catmull_rom_to_bezier(anchors)
    assert len(ctrl) == 3 * (len(anchors) - 1) + 1
    np.testing.assert_allclose(ctrl[::3], anchors)
    # C1: the handles either side of a joint are collinear with it
    for k in range(3, len(ctrl) - 1, 3):
        u, v = ctrl[k] - ctrl[k - 1], ctrl[k + 1] - ctrl[k]
        assert abs(u[0] * v[1] - u[1] * v[0]) < 1e-6 and u @ v > 0


@given(st.integers(0, 1000), st.floats(0.5, 5.0))
@settings(max_examples=40, deadline=None)
def test_resample_spacing_is_uniform(seed, spacing):
    rng = np.random.default_rng(seed)
    pts = np.cumsum(rng.uniform(1, 20, (8, 2)), axis=0)
    out = geo.resample_polyline(pts, spacing)
    np.testing.assert_allclose(out[[0, -1]], pts[[0, -1]])
    steps = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert steps.max() <= spacing + 1e-9


@given(st.floats(-np.pi, np.pi), st.floats(-50, 50), st.floats(-50, 50))
@settings(max_examples=50, deadline=None)
def test_projection_is_rigid_invariant(theta, dx, dy):
    pts = np.array([[0, 0], [30, 5], [60, -10], [90, 0]], float)
    p = np.array([40.0, 12.0])
    R = geo.rotation_matrix(theta)
    d0, s0, _ = geo.project_to_polyline(p, pts)
    d1, s1, _ = geo.project_to_polyline(R @ p + [dx, dy], pts @ R.T + [dx, dy])
    assert d1 == pytest.approx(d0, abs=1e-6)
    assert s1 == pytest.approx(s0, abs=1e-6)


def test_tangent_one_sided_at_ends():
    pts = np.array([[0, 0], [1, 0], [1, 1]], float)
    np.testing.assert_allclose(geo.tangent_at(pts, 0), [1, 0])
    np.testing.assert_allclose(geo.tangent_at(pts, 2), [0, 1])
    np.testing.assert_allclose(geo.tangent_at(pts, 1), np.array([1, 1]) / np.sqrt(2))
