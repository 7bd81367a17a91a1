"""Next-point predictors for the tracer.

Both return dense heatmaps over the normalized crop. The analytic predictor
scores a ring of candidates from image evidence alone; the oracle reads the
ground-truth scene and optionally corrupts its answer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo
from .render import stroke_mask
from .scene import Scene
from .tracer import CABLE_THRESHOLD, STEP, NormalizedCrop, PredictorOutput, TraceError


class OracleLocalizationError(TraceError):
    """The trace context is not near any ground-truth cable."""


@dataclass
class AnalyticPredictor:
    """Ring-of-candidates scorer following a bright ridge.

    score = w_angle * cos(angle to +x) + w_cov * chord coverage - penalty * [on background]
    """

    w_angle: float = 1.0
    w_cov: float = 0.5
    background_penalty: float = 2.0
    r_min: float = STEP - 4.0
    r_max: float = STEP + 4.0
    threshold: float = CABLE_THRESHOLD
    name: str = "analytic"

    def scores(self, crop: NormalizedCrop):
        """Candidate pixels ``(u, v)`` and their scores."""
        size = crop.size
        o = crop.origin
        v, u = np.mgrid[0:size, 0:size]
        r = np.hypot(u - o, v - o)
        ring = (r >= self.r_min) & (r <= self.r_max)
        cu, cv, cr = u[ring].astype(float), v[ring].astype(float), r[ring]
        cos = (cu - o) / cr
        t = np.linspace(0.0, 1.0, 17)[1:]
        su = o + t[None, :] * (cu - o)[:, None]
        sv = o + t[None, :] * (cv - o)[:, None]
        iu = np.clip(np.round(su).astype(int), 0, size - 1)
        iv = np.clip(np.round(sv).astype(int), 0, size - 1)
        cov = crop.crop[iv, iu].mean(axis=1) / 255.0
        on_bg = crop.crop[cv.astype(int), cu.astype(int)] < self.threshold
        score = self.w_angle * cos + self.w_cov * cov - self.background_penalty * on_bg
        return np.stack([cu, cv], axis=1), score

    def predict(self, crop: NormalizedCrop) -> PredictorOutput:
        cand, score = self.scores(crop)
        heat = np.zeros((crop.size, crop.size))
        keep = score > 0
        heat[cand[keep, 1].astype(int), cand[keep, 0].astype(int)] = score[keep]
        return PredictorOutput(heat, terminate=not keep.any())


def analytic_predict(crop: NormalizedCrop, context=None, **weights) -> PredictorOutput:
    """Functional form of :class:`AnalyticPredictor`; ``context`` is carried by the crop."""
    return AnalyticPredictor(**weights).predict(crop)


def splat(heat, uv, mass=1.0) -> None:
    """Add ``mass`` at sub-pixel ``uv`` with bilinear weights."""
    size = heat.shape[0]
    u0, v0 = int(np.floor(uv[0])), int(np.floor(uv[1]))
    fu, fv = uv[0] - u0, uv[1] - v0
    for du, dv, wgt in ((0, 0, (1 - fu) * (1 - fv)), (1, 0, fu * (1 - fv)),
                        (0, 1, (1 - fu) * fv), (1, 1, fu * fv)):
        uu, vv = u0 + du, v0 + dv
        if 0 <= uu < size and 0 <= vv < size:
            heat[vv, uu] += mass * wgt


class OraclePredictor:
    """Ground-truth next point 12 px (chord) ahead, with optional corruption.

    ``sigma`` is the perpendicular noise (px, clipped to 5 px so the step stays
    in the spacing band and the next context still localizes). With probability
    ``p_fail`` a random stroke pixel of the crop window is emitted instead.
    Draws are seeded by the context, so the predictor holds no mutable state and
    can be shared between traces.
    """

    name = "oracle"

    def __init__(self, scene: Scene, sigma: float = 0.0, p_fail: float = 0.0, seed: int = 0,
                 step: float = STEP, localize_radius: float = 6.0, noise_clip: float = 5.0):
        self.scene = scene
        self.sigma = float(sigma)
        self.p_fail = float(p_fail)
        self.seed = int(seed)
        self.step = float(step)
        self.localize_radius = float(localize_radius)
        self.noise_clip = float(noise_clip)
        self._fine = []
        owners = []
        for c in scene.cables:
            f = geo.resample_polyline(c.points, 0.5)
            self._fine.append(f)
            owners.append(np.stack([np.full(len(f), len(self._fine) - 1), np.arange(len(f))], 1))
        self._owner = np.vstack(owners) if owners else np.zeros((0, 2), int)
        self._tree = cKDTree(np.vstack(self._fine)) if self._fine else None
        self._mask = None

    def _rng(self, ctx):
        key = [self.seed] + [int(v) for v in np.round(ctx[-2:] * 4).ravel()]
        return np.random.default_rng([abs(k) for k in key] + [int(k < 0) for k in key])

    def localize(self, ctx):
        """``(cable_index, fine_index, direction)`` of the context's last point.

        Near a crossing several strands are within reach; the one that also
        passes closest to the earlier context points wins.
        """
        last = ctx[-1]
        if self._tree is None:
            raise OracleLocalizationError("scene has no cables")
        idx = self._tree.query_ball_point(last, self.localize_radius)
        if not idx:
            raise OracleLocalizationError(
                f"context point {last.tolist()} is not within {self.localize_radius:g} px "
                "of any ground-truth cable")
        idx = np.sort(np.asarray(idx))
        reach = int(len(ctx) * self.step / 0.5)
        best = None
        for k in np.unique(self._owner[idx, 0]):
            fi = np.sort(self._owner[idx][self._owner[idx, 0] == k, 1])
            runs = np.split(fi, np.flatnonzero(np.diff(fi) > 2) + 1)
            f = self._fine[k]
            for run in runs:
                i = run[np.argmin(np.linalg.norm(f[run] - last, axis=1))]
                lo, hi = max(i - reach, 0), min(i + reach + 1, len(f))
                d = np.linalg.norm(f[None, lo:hi] - ctx[:-1, None], axis=2)
                cost = float(d.min(axis=1).sum())
                # context indices must run monotonically into i; at a hairpin
                # tighter than the step the wrong strand fails this
                j = lo + np.argmin(d, axis=1)
                ref = j[-1] if j[-1] != i else j[0]
                direction = 1 if ref <= i else -1
                order = np.append(j, i) * direction
                bad = int(np.any(np.diff(order) < 0))
                cand = (bad, cost, float(np.linalg.norm(f[i] - last)), int(k), int(i), direction)
                if best is None or cand[:3] < best[:3]:
                    best = cand
        return best[3], best[4], best[5]

    def true_next(self, ctx):
        """Ground-truth next point, or ``None`` when the cable ends within the step."""
        k, i, direction = self.localize(ctx)
        f = self._fine[k]
        last = ctx[-1]
        seq = f[i::direction] if direction > 0 else f[i::-1]
        d = np.linalg.norm(seq - last, axis=1)
        far = np.flatnonzero(d >= self.step)
        if len(far) == 0:
            return (seq[-1], k) if d[-1] >= self.step * 2.0 / 3.0 else (None, k)
        j = int(far[0])
        if j == 0:
            return seq[0], k
        # interpolate the crossing of the step circle on the last fine segment
        a, b = seq[j - 1], seq[j]
        da, db = d[j - 1], d[j]
        t = (self.step - da) / max(db - da, 1e-9)
        return a + np.clip(t, 0, 1) * (b - a), k

    def _stroke_mask(self):
        if self._mask is None:
            self._mask = stroke_mask(self.scene)
        return self._mask

    def predict(self, crop: NormalizedCrop) -> PredictorOutput:
        ctx = np.asarray(crop.source_context, dtype=float)
        heat = np.zeros((crop.size, crop.size))
        rng = self._rng(ctx)
        fail = self.p_fail > 0 and rng.random() < self.p_fail
        if fail:
            mask = self._stroke_mask()
            v, u = np.mgrid[0:crop.size, 0:crop.size]
            src = np.round(crop.to_source(np.stack([u, v], -1).reshape(-1, 2))).astype(int)
            h, w = mask.shape
            ok = (src[:, 0] >= 0) & (src[:, 0] < w) & (src[:, 1] >= 0) & (src[:, 1] < h)
            on = np.zeros(len(src), bool)
            on[ok] = mask[src[ok, 1], src[ok, 0]]
            # stay clear of the centre so a failure still makes a step
            cen = np.round(crop.center).astype(int)
            on &= np.linalg.norm(src - cen, axis=1) >= self.step - 4
            cand = np.flatnonzero(on)
            if len(cand):
                target = src[cand[rng.integers(len(cand))]].astype(float)
                splat(heat, crop.to_crop(target))
                return PredictorOutput(heat)
        target, k = self.true_next(ctx)
        if target is None:
            return PredictorOutput(heat, terminate=True)
        if self.sigma > 0:
            tan = target - ctx[-1]
            tan = tan / max(np.linalg.norm(tan), 1e-9)
            normal = np.array([-tan[1], tan[0]])
            eps = np.clip(rng.normal(0.0, self.sigma), -self.noise_clip, self.noise_clip)
            target = target + eps * normal
        splat(heat, crop.to_crop(target))
        return PredictorOutput(heat)


def oracle_predict(crop: NormalizedCrop, context, scene: Scene, noise=(0.0, 0.0), seed=0
                   ) -> PredictorOutput:
    """Functional form of :class:`OraclePredictor` (rebuilds its index each call)."""
    sigma, p_fail = noise
    return OraclePredictor(scene, sigma, p_fail, seed).predict(crop)
