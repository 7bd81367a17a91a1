"""Crossings along a trace: detection, over/under classification and correction.

A crossing is where the trace polyline intersects itself; each crossing has two
encounters (visits) in trace order. A classifier scores every encounter, scores
at or above ``THRESHOLD`` meaning "this strand is on top", and the pair is then
made consistent by trusting the more confident encounter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from . import geometry as geo
from .scene import Scene, _cluster
from .tracer import sample_image

THRESHOLD = 0.275
CROP = 20
MERGE_RADIUS = 6.0


class SemiPlanarityError(ValueError):
    """More than two trace passes meet at one crossing."""


@dataclass
class Encounter:
    index: int
    param: float
    score: float | None = None
    label: str | None = None
    confidence: float | None = None
    classifiable: bool = True
    raw_score: float | None = None

    def to_dict(self) -> dict:
        def num(v):
            return None if v is None else float(v)
        return {"index": int(self.index), "param": float(self.param), "score": num(self.score),
                "raw_score": num(self.raw_score),
                "label": self.label, "confidence": num(self.confidence),
                "classifiable": bool(self.classifiable)}


@dataclass
class CrossingObservation:
    position: np.ndarray
    encounters: list
    confidence: float | None = None
    flags: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return len(self.encounters) == 2

    @property
    def first_visit(self) -> int:
        return self.encounters[0].index

    @property
    def second_visit(self) -> int | None:
        return self.encounters[1].index if self.complete else None

    @property
    def raw_scores(self) -> tuple:
        return tuple(e.score if e.raw_score is None else e.raw_score for e in self.encounters)

    @property
    def labels(self) -> tuple:
        return tuple(e.label for e in self.encounters)

    def to_dict(self) -> dict:
        return {"position": [float(v) for v in self.position],
                "first_visit": self.first_visit, "second_visit": self.second_visit,
                "raw_scores": [None if v is None else float(v) for v in self.raw_scores], "labels": list(self.labels),
                "confidence": None if self.confidence is None else float(self.confidence), "flags": list(self.flags),
                "encounters": [e.to_dict() for e in self.encounters]}

    @classmethod
    def from_dict(cls, d) -> "CrossingObservation":
        encs = [Encounter(**e) for e in d["encounters"]]
        return cls(np.array(d["position"], dtype=float), encs, d.get("confidence"),
                   list(d.get("flags", [])))


def save_crossings(path, observations) -> None:
    Path(path).write_text(json.dumps([o.to_dict() for o in observations], indent=1) + "\n")


def load_crossings(path) -> list:
    return [CrossingObservation.from_dict(d) for d in json.loads(Path(path).read_text())]


def detect_crossings(trace_points, merge_radius: float = MERGE_RADIUS) -> list:
    """Self-intersections of the trace polyline, one observation per crossing.

    Intersections closer than ``merge_radius`` form one crossing; their
    segment parameters are grouped into passes, and exactly two passes are
    required. Observations are ordered by their first visit.
    """
    pts = geo.as_points(trace_points)
    if len(pts) < 3:
        return []
    hits = geo.polyline_intersections(pts, min_gap=2)
    if not hits:
        return []
    where = np.array([h[4] for h in hits])
    out = []
    for group in _cluster(where, merge_radius):
        params = sorted({round(h[0] + h[2], 9) for h in (hits[k] for k in group)}
                        | {round(h[1] + h[3], 9) for h in (hits[k] for k in group)})
        passes = [[params[0]]]
        for p in params[1:]:
            if p - passes[-1][-1] <= 2.0:
                passes[-1].append(p)
            else:
                passes.append([p])
        if len(passes) != 2:
            raise SemiPlanarityError(
                f"{len(passes)} trace passes meet near {where[group].mean(axis=0).round(1).tolist()}")
        encs = []
        for ps in passes:
            m = float(np.mean(ps))
            encs.append(Encounter(int(np.floor(m)) if m < len(pts) - 1 else len(pts) - 2, m))
        out.append(CrossingObservation(where[group].mean(axis=0), encs))
    out.sort(key=lambda o: o.encounters[0].param)
    return out


@dataclass
class ClassifierInput:
    crop: np.ndarray
    segment_channel: np.ndarray
    position_channel: np.ndarray
    rotation: float
    center: np.ndarray
    segment: np.ndarray
    classifiable: bool = True

    def to_crop(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return (xy - self.center) @ geo.rotation_matrix(-self.rotation).T + CROP / 2.0


def classifier_input(image, trace_points, position, encounter: Encounter,
                     size: int = CROP) -> ClassifierInput:
    """Rotated window at the crossing; the segment of interest runs along +x."""
    pts = geo.as_points(trace_points)
    lo = max(encounter.index - 1, 0)
    hi = min(encounter.index + 3, len(pts))
    seg = pts[lo:hi]
    d = seg[-1] - seg[0]
    rotation = float(np.arctan2(d[1], d[0]))
    center = np.asarray(position, dtype=float)
    h, w = np.asarray(image).shape
    half = size / 2.0
    ok = bool(half <= center[0] <= w - 1 - half and half <= center[1] <= h - 1 - half)
    v, u = np.mgrid[0:size, 0:size].astype(float)
    src = center + (np.stack([u, v], -1) - half) @ geo.rotation_matrix(rotation).T
    crop = sample_image(image, src, float(np.median(image)))
    ci = ClassifierInput(crop, np.zeros((size, size)), np.exp(-((u - half) ** 2 + (v - half) ** 2) / 8.0),
                         rotation, center, seg, ok)
    local = ci.to_crop(seg)
    fine = geo.resample_polyline(local, 0.25) if len(local) > 1 else local
    ij = np.round(fine).astype(int)
    keep = (ij >= 0).all(axis=1) & (ij < size).all(axis=1)
    ci.segment_channel[ij[keep, 1], ij[keep, 0]] = 1.0
    return ci


class Classifier(Protocol):
    name: str

    def score(self, inp: ClassifierInput) -> float: ...


@dataclass
class PhotometricClassifier:
    """Continuity of the segment of interest through the crossing centre.

    Along the crop's centre rows, the darkest column within ``reach`` px of the
    centre is compared with the strand's own brightness near the crop ends. An
    under strand shows the dark boundary of the strand lying on top of it.
    ``lo``/``hi`` put the decision threshold near a ratio of 0.8, between the
    two classes as measured on rendered template crossings.
    """

    reach: int = 7
    lo: float = 0.72
    hi: float = 1.0
    name: str = "photometric"

    def score(self, inp: ClassifierInput) -> float:
        size = inp.crop.shape[0]
        c = size // 2
        band = inp.crop[c - 1:c + 2].max(axis=0)
        core = band[c - self.reach:c + self.reach + 1].min()
        ends = np.concatenate([band[:2], band[-2:]])
        ref = max(float(np.median(ends)), 1.0)
        return float(np.clip((core / ref - self.lo) / (self.hi - self.lo), 0.0, 1.0))


def score_for_label(over: bool, strength: float, threshold: float = THRESHOLD) -> float:
    """Score emitting ``over`` with the given strength in [0, 1]."""
    return threshold + strength * (1 - threshold) if over else threshold - strength * threshold


class OracleClassifier:
    """Ground-truth over/under with symmetric flip noise ``epsilon``.

    The emitted score's distance from the threshold is Beta(4, 2) when the
    label is correct and Beta(2, 4) when flipped, so confidence correlates with
    correctness.
    """

    name = "oracle"

    def __init__(self, scene: Scene, epsilon: float = 0.0, seed: int = 0, match_radius: float = 8.0):
        self.scene = scene
        self.epsilon = float(epsilon)
        self.seed = int(seed)
        self.match_radius = float(match_radius)
        self._gt = scene.crossings_gt

    def truth(self, inp: ClassifierInput) -> bool | None:
        """Whether the segment of interest is the over strand, or None if unmatched."""
        if not self._gt:
            return None
        pos = np.array([c.position for c in self._gt])
        d = np.linalg.norm(pos - inp.center, axis=1)
        k = int(np.argmin(d))
        if d[k] > self.match_radius:
            return None
        c = self._gt[k]
        direction = inp.segment[-1] - inp.segment[0]
        direction = direction / max(np.linalg.norm(direction), 1e-9)
        cos = []
        for strand in (c.strand_a, c.strand_b):
            t = geo.tangent_at(self.scene.cable(strand[0]).points, strand[1])
            cos.append(abs(float(t @ direction)))
        side = "a" if cos[0] >= cos[1] else "b"
        return side == c.over

    def score(self, inp: ClassifierInput) -> float:
        over = self.truth(inp)
        if over is None:
            return 0.5
        key = [self.seed] + [int(abs(v)) for v in np.round(np.r_[inp.center, inp.rotation] * 100)]
        rng = np.random.default_rng(key)
        flip = rng.random() < self.epsilon
        strength = rng.beta(2, 4) if flip else rng.beta(4, 2)
        return score_for_label(over != flip, strength)


def classify_encounter(classifier: Classifier, image, trace_points, observation, k: int) -> float:
    """Score encounter ``k`` of ``observation`` in place and return the score."""
    enc = observation.encounters[k]
    inp = classifier_input(image, trace_points, observation.position, enc)
    set_score(enc, float(classifier.score(inp)) if inp.classifiable else 0.5, inp.classifiable)
    return enc.score


def set_score(enc: Encounter, score: float, classifiable: bool = True) -> Encounter:
    """Fill label and confidence from a classifier score; unclassifiable gets 0.5."""
    enc.classifiable = bool(classifiable)
    enc.score = float(score) if classifiable else 0.5
    enc.raw_score = enc.score
    enc.label = label_for(enc.score)
    enc.confidence = confidence(enc.score) if classifiable else 0.5
    return enc


def classify_all(classifier: Classifier, image, trace_points, observations) -> list:
    for obs in observations:
        for k in range(len(obs.encounters)):
            classify_encounter(classifier, image, trace_points, obs, k)
    return observations


def label_for(score: float, threshold: float = THRESHOLD) -> str:
    return "over" if score >= threshold else "under"


def confidence(score: float, threshold: float = THRESHOLD) -> float:
    """Distance from the threshold scaled into [0.5, 1]."""
    return 0.5 + 0.5 * abs(score - threshold) / max(threshold, 1.0 - threshold)


def correct_crossings(observations) -> list:
    """Make every complete crossing have one over and one under encounter.

    When the thresholded labels agree, the less confident encounter takes score
    ``1 - s`` and the opposite label; ties keep the first encounter. The
    crossing's confidence is the winning encounter's.
    """
    for obs in observations:
        for e in obs.encounters:
            if e.score is None:
                raise ValueError("encounters must be scored before correction")
            if e.raw_score is None:
                e.raw_score = e.score
            if e.label is None:
                e.label = label_for(e.score)
            if e.confidence is None:
                e.confidence = confidence(e.score) if e.classifiable else 0.5
        if not obs.complete:
            obs.confidence = obs.encounters[0].confidence
            if "incomplete" not in obs.flags:
                obs.flags.append("incomplete")
            continue
        a, b = obs.encounters
        if not a.classifiable and not b.classifiable:
            a.label, b.label = "over", "under"
            obs.confidence = 0.5
            if "unclassifiable" not in obs.flags:
                obs.flags.append("unclassifiable")
            continue
        win, lose = (a, b) if a.confidence >= b.confidence else (b, a)
        if a.label == b.label:
            lose.score = 1.0 - lose.score
            lose.label = "under" if win.label == "over" else "over"
            if "corrected" not in obs.flags:
                obs.flags.append("corrected")
        obs.confidence = win.confidence
    return observations
