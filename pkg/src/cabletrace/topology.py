"""Crossing sequences, Reidemeister cancellation, knot spans and grasp points.

The topology state is the list of corrected encounters in trace order, each
tagged with a crossing id (numbered by first appearance) and a sign, ``O`` for
over and ``U`` for under. Cancellation removes loops (two consecutive
encounters of one crossing) and double pairs (two consecutive encounters with
equal signs whose partners are also consecutive) until neither applies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import geometry as geo
from .tracer import CABLE_THRESHOLD

EXCLUSION = 15.0
GRASP_CROP = 20
DEFAULT_T = 40.0


@dataclass(frozen=True)
class SeqEncounter:
    crossing: int
    sign: str
    position: tuple
    trace_index: float
    confidence: float = 1.0
    complete: bool = True

    def token(self) -> str:
        return f"{self.sign}{self.crossing}"


@dataclass
class TopologyState:
    sequence: list
    crossing_positions: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.sequence)

    def code(self, renumber: bool = False) -> str:
        if not renumber:
            return " ".join(e.token() for e in self.sequence)
        ids: dict[int, int] = {}
        for e in self.sequence:
            ids.setdefault(e.crossing, len(ids) + 1)
        return " ".join(f"{e.sign}{ids[e.crossing]}" for e in self.sequence)

    def to_dict(self) -> dict:
        return {
            "sequence": [{"crossing": e.crossing, "sign": e.sign,
                          "position": [float(v) for v in e.position],
                          "trace_index": float(e.trace_index), "confidence": e.confidence,
                          "complete": e.complete} for e in self.sequence],
            "code": self.code(),
            "crossing_positions": [[float(v) for v in p] for p in self.crossing_positions],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d) -> "TopologyState":
        seq = [SeqEncounter(e["crossing"], e["sign"], tuple(e["position"]), e["trace_index"],
                            e.get("confidence", 1.0), e.get("complete", True))
               for e in d["sequence"]]
        return cls(seq, [tuple(p) for p in d.get("crossing_positions", [])],
                   d.get("provenance", {}))


def from_code(code: str) -> TopologyState:
    """State from a code string such as ``"U1 O2 U3 O1 U2 O3"`` (positions unknown)."""
    seq = [SeqEncounter(int(tok[1:]), tok[0], (0.0, 0.0), float(k))
           for k, tok in enumerate(code.split())]
    return TopologyState(seq)


def build_sequence(observations, trace=None) -> TopologyState:
    """Flatten corrected crossings into encounters ordered along the trace."""
    flat = []
    for k, obs in enumerate(observations):
        for e in obs.encounters:
            if e.label not in ("over", "under"):
                raise ValueError("crossings must be classified and corrected first")
            flat.append((e.param, k, e, obs))
    flat.sort(key=lambda r: (r[0], r[1]))
    ids: dict[int, int] = {}
    seq = []
    for param, k, e, obs in flat:
        ids.setdefault(k, len(ids) + 1)
        conf = obs.confidence if obs.confidence is not None else (e.confidence or 0.5)
        seq.append(SeqEncounter(ids[k], "O" if e.label == "over" else "U",
                                tuple(float(v) for v in obs.position), float(param),
                                float(conf), obs.complete))
    prov = {"n_crossings": len(observations),
            "incomplete": [ids[k] for k, o in enumerate(observations) if not o.complete],
            "corrected": [ids[k] for k, o in enumerate(observations) if "corrected" in o.flags]}
    if trace is not None:
        prov["trace_points"] = int(len(getattr(trace, "points", trace)))
        prov["termination"] = getattr(trace, "termination", None)
    positions = [tuple(float(v) for v in o.position) for o in observations]
    return TopologyState(seq, positions, prov)


def _reid_one(seq):
    for i in range(len(seq) - 1):
        if seq[i].crossing == seq[i + 1].crossing:
            return seq[:i] + seq[i + 2:]
    return None


def _reid_two(seq):
    where: dict[int, list[int]] = {}
    for k, e in enumerate(seq):
        where.setdefault(e.crossing, []).append(k)
    for i in range(len(seq) - 1):
        a, b = seq[i], seq[i + 1]
        if a.crossing == b.crossing or a.sign != b.sign:
            continue
        pa, pb = where[a.crossing], where[b.crossing]
        if len(pa) != 2 or len(pb) != 2:
            continue
        ja = pa[0] if pa[1] == i else pa[1]
        jb = pb[0] if pb[1] == i + 1 else pb[1]
        if abs(ja - jb) != 1:
            continue
        if seq[ja].sign == a.sign or seq[jb].sign == b.sign:
            continue
        drop = {i, i + 1, ja, jb}
        return [e for k, e in enumerate(seq) if k not in drop]
    return None


def cancel_crossings(state: TopologyState, max_rounds: int | None = None) -> TopologyState:
    """Fixpoint of loop removal (exhausted first) and single double-pair removals."""
    seq = list(state.sequence)
    applied = []
    while True:
        while (nxt := _reid_one(seq)) is not None:
            applied.append("I")
            seq = nxt
        nxt = _reid_two(seq)
        if nxt is None:
            break
        applied.append("II")
        seq = nxt
        if max_rounds is not None and len(applied) >= max_rounds:
            break
    prov = dict(state.provenance, moves=applied)
    return replace(state, sequence=seq, provenance=prov)


@dataclass(frozen=True)
class KnotSpan:
    start_idx: int
    end_idx: int
    first_undercrossing: SeqEncounter

    def to_dict(self) -> dict:
        e = self.first_undercrossing
        return {"start_idx": self.start_idx, "end_idx": self.end_idx,
                "crossing": e.crossing, "position": [float(v) for v in e.position],
                "trace_index": float(e.trace_index)}


def detect_knots(state: TopologyState) -> list:
    """Non-overlapping spans meeting the knot conditions, in trace order.

    A span opens at an undercrossing, closes at the overcrossing of the same
    crossing further along, and contains at least one other overcrossing. Each
    span is the one starting earliest after the previous span closed.
    """
    seq = state.sequence
    spans = []
    i = 0
    while i < len(seq):
        e = seq[i]
        if e.sign == "U":
            j = next((k for k in range(i + 1, len(seq)) if seq[k].crossing == e.crossing), None)
            if j is not None and seq[j].sign == "O" and any(s.sign == "O" for s in seq[i + 1:j]):
                spans.append(KnotSpan(i, j, e))
                i = j + 1
                continue
        i += 1
    return spans


@dataclass
class GraspPlan:
    cage_point: tuple | None
    pinch_point: tuple | None
    cage_score: float
    pinch_score: float
    cage_extended: bool = False
    pinch_extended: bool = False
    feasible: bool = True
    cage_index: int | None = None
    pinch_index: int | None = None

    @property
    def search_extended(self) -> tuple:
        return (self.cage_extended, self.pinch_extended)

    def to_dict(self) -> dict:
        def num(v):
            return None if v is None or not np.isfinite(v) else float(v)
        return {"cage_point": None if self.cage_point is None else list(map(float, self.cage_point)),
                "pinch_point": None if self.pinch_point is None else list(map(float, self.pinch_point)),
                "cage_score": num(self.cage_score), "pinch_score": num(self.pinch_score),
                "cage_extended": self.cage_extended, "pinch_extended": self.pinch_extended,
                "feasible": self.feasible, "cage_index": self.cage_index,
                "pinch_index": self.pinch_index}


def graspability(image, points, crossing_positions, exclusion: float = EXCLUSION,
                 crop: int = GRASP_CROP, threshold: float = CABLE_THRESHOLD) -> np.ndarray:
    """Cable-pixel count in a crop around each point; ``-inf`` near any crossing."""
    img = np.asarray(image)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cable = img >= threshold
    # summed-area table for O(1) window counts
    sat = np.pad(cable.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
    h, w = img.shape
    half = crop // 2
    c = np.round(pts).astype(int)
    x0, x1 = np.clip(c[:, 0] - half, 0, w), np.clip(c[:, 0] + half, 0, w)
    y0, y1 = np.clip(c[:, 1] - half, 0, h), np.clip(c[:, 1] + half, 0, h)
    g = (sat[y1, x1] - sat[y0, x1] - sat[y1, x0] + sat[y0, x0]).astype(float)
    if len(crossing_positions):
        cp = np.asarray(crossing_positions, dtype=float)
        d = np.linalg.norm(pts[:, None, :] - cp[None], axis=2).min(axis=1)
        g[d < exclusion] = -np.inf
    return g


def _trace_range(lo: float, hi: float, n: int):
    a = int(np.ceil(lo))
    b = int(np.floor(hi))
    return max(a, 0), min(b, n - 1)


def _search(g, lo, hi, T):
    """Argmax over [lo, hi]; extend past ``hi`` one point at a time while below T."""
    k = lo + int(np.argmax(g[lo:hi + 1])) if hi >= lo else None
    if k is not None and (T <= 0 or g[k] >= T):
        return k, False, True
    for m in range(hi + 1, len(g)):
        if g[m] >= T:
            return m, True, True
    return k, True, False


def select_cage_pinch(knot: KnotSpan, state: TopologyState, trace_points, image,
                      T: float = DEFAULT_T, exclusion: float = EXCLUSION) -> GraspPlan:
    """Pinch on the overcrossing strand after the knot's closing crossing; cage inside the knot."""
    seq = state.sequence
    if not (0 <= knot.start_idx < knot.end_idx < len(seq)):
        raise ValueError(f"knot span ({knot.start_idx}, {knot.end_idx}) is outside the sequence")
    pts = geo.as_points(trace_points)
    n = len(pts)
    g = graspability(image, pts, state.crossing_positions, exclusion)
    i, j = knot.start_idx, knot.end_idx
    u1 = max(k for k in range(i, j) if seq[k].sign == "U")
    u2 = next((k for k in range(j + 1, len(seq)) if seq[k].sign == "U"), None)
    p_lo = seq[u1].trace_index
    p_hi = seq[u2].trace_index if u2 is not None else n - 1
    ck = next((k for k in range(i + 1, j) if seq[k].sign == "U"), j)
    c_lo, c_hi = seq[i].trace_index, seq[ck].trace_index
    pk, p_ext, p_ok = _search(g, *_trace_range(p_lo, p_hi, n), T)
    ck_, c_ext, c_ok = _search(g, *_trace_range(c_lo, c_hi, n), T)

    def at(k):
        return None if k is None else tuple(float(v) for v in pts[k])

    return GraspPlan(at(ck_), at(pk), float(g[ck_]) if ck_ is not None else -np.inf,
                     float(g[pk]) if pk is not None else -np.inf, c_ext, p_ext,
                     bool(p_ok and c_ok), ck_, pk)


def topology_report(raw: TopologyState, simplified: TopologyState, knots, plans) -> dict:
    return {"raw_sequence": raw.to_dict(), "simplified_sequence": simplified.to_dict(),
            "knots": [k.to_dict() for k in knots], "grasp_plans": [p.to_dict() for p in plans],
            "verdict": "knot" if knots else "no_knot"}


def save_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=1) + "\n")
