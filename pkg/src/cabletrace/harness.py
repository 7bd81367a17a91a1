"""Datasets, tiered evaluation with ablations, and report emission.

Per trial the harness builds a scene for the tier, renders it, augments it with
three seeds and runs trace -> classify -> correct -> cancel -> detect on each
image. The trial succeeds when at least two of the three images satisfy the
tier's success rule. All randomness flows from one master seed through
:class:`numpy.random.SeedSequence`: trial ``k`` uses child ``k`` of the master,
and that child is split again into scene, render, augmentation, predictor and
classifier seeds.
"""

from __future__ import annotations

import csv
import io
import json
import shutil
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import crossing as cx
from . import topology as tp
from .predictors import AnalyticPredictor, OraclePredictor
from .render import augment, render, save_image
from .scene import (DEFAULT_CANVAS, ENDPOINT_CLEARANCE, CablePath, GenerationError, Scene,
                    endpoint_clearance, find_crossings, generate_random_scene, random_z_order)
from .templates import FAKE_KNOTS, KNOTTED, TRIVIAL, knot_template, random_pose
from .tracer import (PREFIX_LEN, STEP, Trace, TraceConfig, TraceError, arc_coverage,
                     trace_cable)

RULES = ("trace_reaches_correct_terminal", "first_knot_undercrossing_correct", "no_knot_verdict")
ABLATIONS = ("no_cancel", "analytic_tracer")
N_VIEWS = 3
COVERAGE_OK = 0.9
KNOT_TOLERANCE = 6.0
# the analytic prefix (plus one step) must not reach a crossing on the traced cable
START_CLEARANCE = PREFIX_LEN * STEP


# --------------------------------------------------------------------------
# scenes for tiers


def compose_scenes(parts, canvas=DEFAULT_CANVAS, rng=None, extra_cables=()) -> Scene:
    """Several template scenes (one cable each) plus extra cables on one canvas.

    Self-crossings of a template keep the template's over/under assignment;
    every other crossing gets a random one.
    """
    rng = np.random.default_rng() if rng is None else rng
    cables = []
    known = []
    for k, part in enumerate(parts):
        src = part.cables[0]
        cables.append(CablePath(src.control_points, src.thickness, k))
        known.append([(np.asarray(c.position), c.over) for c in part.crossings_gt])
    for c in extra_cables:
        cables.append(CablePath(c.control_points, c.thickness, len(cables)))
    geom = find_crossings(cables)
    z = random_z_order(len(geom), rng)
    for n, g in enumerate(geom):
        ca, cb = g.strand_a[0], g.strand_b[0]
        if ca == cb and ca < len(parts):
            for pos, over in known[ca]:
                if np.linalg.norm(pos - g.position) < 0.5:
                    z[n] = over
                    break
            else:
                raise GenerationError("template crossing moved during composition")
    scene = Scene(tuple(canvas), cables, z, template=parts[0].template if parts else None,
                  code=parts[0].code if parts else None)
    if parts and parts[0].knot_crossings:
        target = parts[0].crossings_gt[parts[0].knot_crossings[0]].position
        d = [np.linalg.norm(np.asarray(c.position) - target) for c in scene.crossings_gt]
        scene.knot_crossings = [int(np.argmin(d))]
    return scene


def start_clearance(scene: Scene, target: int = 0) -> float:
    """Arc length from the start of cable ``target`` to its first crossing."""
    seq = scene.crossing_sequence(target)
    if not seq:
        return np.inf
    pts = scene.cable(target).points
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    return float(np.interp(seq[0][0], np.arange(len(cum)), cum))


def _valid_start(scene: Scene) -> bool:
    return (endpoint_clearance(scene) >= ENDPOINT_CLEARANCE
            and start_clearance(scene) >= START_CLEARANCE)


def _template_part(rng, name, scale, canvas):
    return knot_template(name, scale, random_pose(rng, name, scale, canvas), canvas)


@dataclass(frozen=True)
class TierSpec:
    name: str
    description: str
    rule: str
    trials: int = 30
    templates: tuple = ()
    n_templates: int = 1
    scale: tuple = (1.0, 1.0)
    distractors: int = 0

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown success rule {self.rule!r}")

    def build(self, seed, canvas=DEFAULT_CANVAS, max_attempts: int = 100) -> Scene:
        """Scene for one trial; invalid compositions are redrawn.

        Endpoints must keep ``ENDPOINT_CLEARANCE`` px from every other strand,
        so reaching an endpoint is unambiguous, and the traced cable must not
        cross anything within ``START_CLEARANCE`` px of its start.
        """
        ss = np.random.SeedSequence(seed)
        for child in ss.spawn(max_attempts):
            rng = np.random.default_rng(child)
            try:
                if not self.templates:
                    scene = generate_random_scene(int(rng.integers(2**32)), "exclusion_radius",
                                                  canvas, n_cables=3)
                    if _valid_start(scene):
                        return scene
                    continue
                parts = []
                for _ in range(self.n_templates):
                    name = self.templates[int(rng.integers(len(self.templates)))]
                    parts.append(_template_part(rng, name, rng.uniform(*self.scale), canvas))
                extra = [generate_random_scene(rng.integers(2**32), "exclusion_radius",
                                               canvas).cables[0]
                         for _ in range(self.distractors)]
                scene = compose_scenes(parts, canvas, rng, extra)
                if _valid_start(scene):
                    return scene
            except GenerationError:
                continue
        raise GenerationError(f"tier {self.name}: no valid scene after {max_attempts} attempts")


TIERS = {
    t.name: t for t in [
        TierSpec("A1", "three unknotted random cables", "trace_reaches_correct_terminal"),
        TierSpec("A2", "two cables, one knot each", "trace_reaches_correct_terminal",
                 templates=KNOTTED, n_templates=2, scale=(0.55, 0.7)),
        TierSpec("A3", "three knotted cables, overlapping", "trace_reaches_correct_terminal",
                 templates=KNOTTED, n_templates=3, scale=(0.55, 0.65)),
        TierSpec("C1", "one loose knot", "first_knot_undercrossing_correct",
                 templates=KNOTTED, scale=(0.85, 1.0)),
        TierSpec("C2", "one dense knot", "first_knot_undercrossing_correct",
                 templates=KNOTTED, scale=(0.55, 0.65)),
        TierSpec("C3", "fake knots", "no_knot_verdict", templates=FAKE_KNOTS, scale=(0.8, 1.0)),
    ]
}


# --------------------------------------------------------------------------
# one pipeline run


@dataclass
class PipelineConfig:
    predictor: str = "oracle"
    sigma: float = 0.0
    p_fail: float = 0.0
    classifier: str = "oracle"
    epsilon: float = 0.0
    ablations: tuple = ()
    grasp_threshold: float = tp.DEFAULT_T
    max_steps: int = 400

    def __post_init__(self):
        self.ablations = tuple(sorted(self.ablations))
        bad = set(self.ablations) - set(ABLATIONS)
        if bad:
            raise ValueError(f"unknown ablations {sorted(bad)}")

    @property
    def variant(self) -> str:
        tags = {"no_cancel": "-CC", "analytic_tracer": "-LT"}
        return "".join(tags[a] for a in self.ablations) or "full"

    def to_dict(self) -> dict:
        return {"predictor": self.predictor, "sigma": self.sigma, "p_fail": self.p_fail,
                "classifier": self.classifier, "epsilon": self.epsilon,
                "ablations": list(self.ablations), "grasp_threshold": self.grasp_threshold,
                "max_steps": self.max_steps}

    @classmethod
    def from_dict(cls, d) -> "PipelineConfig":
        return cls(**dict(d, ablations=tuple(d.get("ablations", ()))))


@dataclass
class PipelineResult:
    trace: Trace | None
    crossings: list = field(default_factory=list)
    raw: tp.TopologyState | None = None
    simplified: tp.TopologyState | None = None
    knots: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    error: str | None = None

    def report(self) -> dict:
        if self.raw is None:
            return {"error": self.error}
        return tp.topology_report(self.raw, self.simplified, self.knots, self.plans)


def make_predictor(scene, cfg: PipelineConfig, seed=0):
    if "analytic_tracer" in cfg.ablations or cfg.predictor == "analytic":
        return AnalyticPredictor()
    return OraclePredictor(scene, cfg.sigma, cfg.p_fail, seed)


def make_classifier(scene, cfg: PipelineConfig, seed=0):
    if cfg.classifier == "photometric":
        return cx.PhotometricClassifier()
    return cx.OracleClassifier(scene, cfg.epsilon, seed)


def analyze_trace(image, trace: Trace, scene, cfg: PipelineConfig, classifier_seed=0
                  ) -> PipelineResult:
    """Everything after tracing: crossings, correction, cancellation, knots, grasps."""
    res = PipelineResult(trace)
    try:
        obs = cx.detect_crossings(trace.points)
    except cx.SemiPlanarityError as e:
        res.error = f"crossings: {e}"
        return res
    cx.classify_all(make_classifier(scene, cfg, classifier_seed), image, trace.points, obs)
    cx.correct_crossings(obs)
    res.crossings = obs
    res.raw = tp.build_sequence(obs, trace)
    res.simplified = res.raw if "no_cancel" in cfg.ablations else tp.cancel_crossings(res.raw)
    res.knots = tp.detect_knots(res.simplified)
    res.plans = [tp.select_cage_pinch(k, res.simplified, trace.points, image,
                                      cfg.grasp_threshold) for k in res.knots[:1]]
    return res


def run_pipeline(image, scene: Scene, cfg: PipelineConfig, target: int = 0,
                 predictor_seed=0, classifier_seed=0) -> PipelineResult:
    ends = scene.endpoints
    start = np.round(ends[target][0])
    tcfg = TraceConfig(max_steps=cfg.max_steps, endpoints=[e for pair in ends for e in pair])
    try:
        trace = trace_cable(image, start, make_predictor(scene, cfg, predictor_seed), tcfg,
                            cable_hint=target)
    except TraceError as e:
        return PipelineResult(None, error=f"trace: {e}")
    return analyze_trace(image, trace, scene, cfg, classifier_seed)


# --------------------------------------------------------------------------
# scoring


def knot_truth(scene: Scene):
    """Position of the annotated first-knot undercrossing, or None for no knot."""
    if not scene.knot_crossings:
        return None
    return np.asarray(scene.crossings_gt[scene.knot_crossings[0]].position)


def judge(result: PipelineResult, scene: Scene, rule: str, target: int = 0):
    """``(success, failure tags)`` for one image."""
    tags = []
    trace = result.trace
    cable = scene.cable(target)
    if trace is None:
        return False, ["I" if rule == RULES[0] else "C"]
    far = cable.points[-1]
    reached = trace.termination == "endpoint_reached"
    at_target = reached and np.linalg.norm(trace.points[-1] - far) <= 10.0
    cov = arc_coverage(trace, cable.points)
    if rule == "trace_reaches_correct_terminal":
        if not reached:
            return False, ["I"]
        if not at_target:
            return False, ["II"]
        return (cov >= COVERAGE_OK), ([] if cov >= COVERAGE_OK else ["III"])
    trace_tags = []
    if trace.termination == "retrace_detected":
        trace_tags.append("C")
    if reached and not at_target:
        trace_tags.append("H")
    elif cov < COVERAGE_OK:
        trace_tags.append("F")
    if result.raw is None:
        return False, trace_tags or ["D"]
    truth = knot_truth(scene)
    if rule == "no_knot_verdict":
        if result.knots:
            tags = ["B"] + (["E"] if result.simplified is result.raw
                            and tp.cancel_crossings(result.raw).sequence != result.raw.sequence
                            else [])
            return False, tags + trace_tags
        return True, []
    if truth is None:
        raise ValueError("first-knot rule on a scene without an annotated knot")
    if not result.knots:
        return False, ["A"] + trace_tags
    got = np.asarray(result.knots[0].first_undercrossing.position)
    if np.linalg.norm(got - truth) <= KNOT_TOLERANCE:
        return True, []
    wrong = ["E"] if result.simplified is result.raw else ["D"]
    return False, wrong + trace_tags


def check_invariants(result: PipelineResult, cfg: PipelineConfig) -> list:
    """Messages for every violated structural invariant (empty when all hold)."""
    bad = []
    tr = result.trace
    if tr is not None:
        pts = tr.points
        if len(pts) > 1:
            sp = np.linalg.norm(np.diff(pts, axis=0), axis=1)
            if sp.min() < 8 - 1e-9 or sp.max() > 16 + 1e-9:
                bad.append(f"trace spacing outside [8, 16]: {sp.min():.2f}..{sp.max():.2f}")
    for o in result.crossings:
        if o.complete and o.labels[0] == o.labels[1]:
            bad.append(f"crossing at {o.position.round(1).tolist()} not opposite after correction")
        if o.confidence is not None and not 0.5 <= o.confidence <= 1.0:
            bad.append("confidence outside [0.5, 1]")
    if result.raw is not None and "no_cancel" not in cfg.ablations:
        again = tp.cancel_crossings(result.simplified)
        if again.sequence != result.simplified.sequence:
            bad.append("cancellation not idempotent")
        if len(result.simplified) > len(result.raw):
            bad.append("cancellation increased length")
        counts = Counter(e.crossing for e in result.simplified.sequence)
        raw_counts = Counter(e.crossing for e in result.raw.sequence)
        if any(counts[k] not in (0, raw_counts[k]) for k in raw_counts):
            bad.append("cancellation removed a crossing partially")
    for plan in result.plans:
        if tr is None:
            continue
        for pt, ext in ((plan.cage_point, plan.cage_extended), (plan.pinch_point, plan.pinch_extended)):
            if pt is None:
                continue
            if np.min(np.linalg.norm(tr.points - np.asarray(pt), axis=1)) > 1e-6:
                bad.append("grasp point not on the trace")
            cps = result.simplified.crossing_positions
            if not ext and plan.feasible and cps and np.isfinite(plan.pinch_score) and \
                    np.min(np.linalg.norm(np.asarray(cps) - np.asarray(pt), axis=1)) < tp.EXCLUSION:
                bad.append("grasp point within the crossing exclusion distance")
    return bad


# --------------------------------------------------------------------------
# tiers and reports


def trial_seeds(master_seed, n_trials):
    """Integer seeds per trial: scene, render, three augmentations, predictor, classifier."""
    out = []
    for child in np.random.SeedSequence(master_seed).spawn(n_trials):
        s = [int(v) for v in child.generate_state(7)]
        out.append({"scene": s[0], "render": s[1], "augment": s[2:5], "predictor": s[5],
                    "classifier": s[6]})
    return out


@dataclass
class EvalReport:
    tier: str
    variant: str
    seed: int
    config: dict
    trials: list = field(default_factory=list)
    runtimes: list | None = None

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def n_success(self) -> int:
        return sum(1 for t in self.trials if t["success"])

    @property
    def success_rate(self) -> float | None:
        return self.n_success / self.n_trials if self.trials else None

    @property
    def failure_counts(self) -> dict:
        c = Counter(tag for t in self.trials for tag in t["failure_tags"])
        return dict(sorted(c.items()))

    @property
    def invariant_failures(self) -> list:
        return [m for t in self.trials for m in t.get("invariant_failures", [])]

    def to_dict(self) -> dict:
        d = {"tier": self.tier, "variant": self.variant, "seed": self.seed,
             "n_trials": self.n_trials, "n_success": self.n_success,
             "success_rate": self.success_rate, "failure_counts": self.failure_counts,
             "config": self.config, "trials": self.trials}
        if self.runtimes is not None:
            d["runtimes"] = self.runtimes
        return d

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        return cls(d["tier"], d["variant"], d["seed"], d["config"], d["trials"],
                   d.get("runtimes"))

    def save(self, path) -> None:
        Path(path).write_text(emit_report(self, "json"))

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def run_trial(tier: TierSpec, seeds: dict, cfg: PipelineConfig, canvas=DEFAULT_CANVAS,
              out_dir=None) -> dict:
    scene = tier.build(seeds["scene"], canvas)
    base = render(scene, seeds["render"])
    views = []
    invariant_failures = []
    for a, aug_seed in enumerate(seeds["augment"][:N_VIEWS]):
        img = augment(base, aug_seed)
        res = run_pipeline(img, scene, cfg, 0, seeds["predictor"], seeds["classifier"])
        ok, tags = judge(res, scene, tier.rule)
        invariant_failures += check_invariants(res, cfg)
        views.append({"success": bool(ok), "failure_tags": tags,
                      "termination": res.trace.termination if res.trace else None,
                      "code": res.raw.code() if res.raw else None,
                      "simplified": res.simplified.code() if res.simplified else None,
                      "n_knots": len(res.knots), "error": res.error})
        if out_dir is not None:
            d = Path(out_dir)
            d.mkdir(parents=True, exist_ok=True)
            if res.trace is not None:
                res.trace.save(d / f"trace_{a}.json")
            cx.save_crossings(d / f"crossings_{a}.json", res.crossings)
            tp.save_report(d / f"topology_{a}.json", res.report())
    if out_dir is not None:
        scene.save(Path(out_dir) / "scene.json")
    wins = sum(v["success"] for v in views)
    success = wins * 2 > len(views)
    tags = [] if success else sorted({t for v in views if not v["success"] for t in v["failure_tags"]})
    trial = {"seeds": seeds, "success": success, "failure_tags": tags, "views": views}
    if invariant_failures:
        trial["invariant_failures"] = invariant_failures
    if out_dir is not None:
        Path(out_dir, "trial.json").write_text(
            json.dumps({"tier": tier.name, "config": cfg.to_dict(), **trial}, indent=1) + "\n")
    return trial


def run_tier(tier, cfg: PipelineConfig | None = None, trials: int | None = None, seed: int = 0,
             canvas=DEFAULT_CANVAS, out_dir=None, timing: bool = False) -> EvalReport:
    """Evaluate one tier under one pipeline variant."""
    tier = TIERS[tier] if isinstance(tier, str) else tier
    cfg = cfg or PipelineConfig()
    n = tier.trials if trials is None else trials
    report = EvalReport(tier.name, cfg.variant, int(seed),
                        {"pipeline": cfg.to_dict(), "rule": tier.rule, "canvas": list(canvas),
                         "views": N_VIEWS}, [], [] if timing else None)
    for k, seeds in enumerate(trial_seeds(seed, n)):
        t0 = time.perf_counter()
        sub = None if out_dir is None else Path(out_dir) / "trials" / f"{tier.name}_{cfg.variant}_{k:03d}"
        report.trials.append(run_trial(tier, seeds, cfg, canvas, sub))
        if timing:
            report.runtimes.append(round(time.perf_counter() - t0, 4))
    return report


def reanalyze_trial(trial_dir, view: int = 0) -> bool:
    """Re-derive one view's verdict from its saved scene and trace."""
    d = Path(trial_dir)
    meta = json.loads((d / "trial.json").read_text())
    scene = Scene.load(d / "scene.json")
    cfg = PipelineConfig.from_dict(meta["config"])
    seeds = meta["seeds"]
    img = augment(render(scene, seeds["render"]), seeds["augment"][view])
    path = d / f"trace_{view}.json"
    if not path.exists():
        return judge(PipelineResult(None), scene, TIERS[meta["tier"]].rule)[0]
    res = analyze_trace(img, Trace.load(path), scene, cfg, seeds["classifier"])
    return judge(res, scene, TIERS[meta["tier"]].rule)[0]


def _fmt_rate(r: EvalReport) -> str:
    return f"{r.n_success}/{r.n_trials}" if r.n_trials else "n/a"


CSV_FIELDS = ("tier", "variant", "trials", "successes", "success_rate", "failures")
VARIANT_ORDER = ("-LT", "-CC", "full")


def emit_report(reports, fmt: str = "json") -> str:
    """Serialize one report or a list of them as ``json``, ``csv`` or ``md``."""
    single = isinstance(reports, EvalReport)
    reps = [reports] if single else list(reports)
    if fmt == "json":
        body = reps[0].to_dict() if single else [r.to_dict() for r in reps]
        return json.dumps(body, indent=1) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in reps:
            rate = "" if r.success_rate is None else f"{r.success_rate:.4f}"
            fails = ";".join(f"{k}:{v}" for k, v in r.failure_counts.items())
            w.writerow([r.tier, r.variant, r.n_trials, r.n_success, rate, fails])
        return buf.getvalue()
    if fmt in ("md", "markdown", "markdown-table"):
        variants = [v for v in VARIANT_ORDER if any(r.variant == v for r in reps)]
        variants += sorted({r.variant for r in reps} - set(variants))
        tiers = sorted({r.tier for r in reps})
        cell = {(r.tier, r.variant): r for r in reps}
        lines = ["| Tier | " + " | ".join(variants) + " |",
                 "|---|" + "---|" * len(variants)]
        for t in tiers:
            row = [_fmt_rate(cell[(t, v)]) if (t, v) in cell else "-" for v in variants]
            lines.append(f"| {t} | " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}; expected json, csv or md")


def load_reports(directory) -> list:
    """Every tier report in ``directory`` (sorted by file name)."""
    out = []
    for p in sorted(Path(directory).glob("*.json")):
        d = json.loads(p.read_text())
        if isinstance(d, dict) and "tier" in d and "trials" in d:
            out.append(EvalReport.from_dict(d))
    return out


# --------------------------------------------------------------------------
# datasets


def _knot_free(scene: Scene) -> bool:
    for c in scene.cables:
        st = tp.from_code(scene.code_string(c.id))
        if tp.detect_knots(tp.cancel_crossings(st)):
            return False
    return True


def _dataset_scene(rng, knotted: bool, canvas):
    for _ in range(100):
        try:
            n_extra = int(rng.integers(0, 3))
            if knotted:
                name = KNOTTED[int(rng.integers(len(KNOTTED)))]
                part = _template_part(rng, name, rng.uniform(0.6, 1.0), canvas)
                extra = [generate_random_scene(rng.integers(2**32), "exclusion_radius",
                                               canvas).cables[0] for _ in range(n_extra)]
                return compose_scenes([part], canvas, rng, extra), name
            if rng.random() < 0.5:
                name = TRIVIAL[int(rng.integers(len(TRIVIAL)))]
                scale = rng.uniform(0.8, 1.0)
                scene = compose_scenes([_template_part(rng, name, scale, canvas)], canvas, rng)
            else:
                method = ("exclusion_radius", "near_parallel", "spatial_constraint")[
                    int(rng.integers(3))]
                scene = generate_random_scene(rng.integers(2**32), method, canvas,
                                              n_cables=1 + n_extra)
                name = None
            if _knot_free(scene):
                return scene, name
        except GenerationError:
            continue
    raise GenerationError("could not draw a dataset scene")


def _crossing_crops(image, scene, rng, n, fraction, size=64):
    """``n`` crops; ``fraction`` of them centred on crossings, the rest on cable points."""
    h, w = image.shape
    pad = np.pad(image, size, mode="constant")
    crossings = [np.asarray(c.position) for c in scene.crossings_gt]
    allpts = np.vstack([c.points for c in scene.cables])
    out = np.zeros((n, size, size), np.uint8)
    for k in range(n):
        if crossings and rng.random() < fraction:
            p = crossings[int(rng.integers(len(crossings)))] + rng.uniform(-6, 6, 2)
        else:
            p = allpts[int(rng.integers(len(allpts)))]
        x, y = np.clip(np.round(p).astype(int), [0, 0], [w - 1, h - 1]) + size
        out[k] = pad[y - size // 2:y + size // 2, x - size // 2:x + size // 2]
    return out


def generate_dataset(out_dir, count: int = 300, seed: int = 0, knotted_fraction: float = 0.5,
                     canvas=DEFAULT_CANVAS, image_format: str = "png", crops_per_image: int = 0,
                     crossing_crop_fraction: float = 0.95) -> dict:
    """Write scenes, images and a manifest; returns the manifest.

    Item ``k`` is knotted when ``floor((k + 1) f) > floor(k f)``, so the knotted
    share is exact whenever ``count * f`` is an integer.
    """
    out = Path(out_dir)
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    written = []
    manifest = {"count": count, "seed": seed, "knotted_fraction": knotted_fraction,
                "canvas": list(canvas), "image_format": image_format,
                "crops_per_image": crops_per_image,
                "crossing_crop_fraction": crossing_crop_fraction, "items": []}
    try:
        for sub in ("scenes", "images") + (("crops",) if crops_per_image else ()):
            (out / sub).mkdir(exist_ok=True)
        children = np.random.SeedSequence(seed).spawn(count)
        for k, child in enumerate(children):
            knotted = int(np.floor((k + 1) * knotted_fraction)) > int(np.floor(k * knotted_fraction))
            s_scene, s_render, s_aug, s_crop = (int(v) for v in child.generate_state(4))
            scene, name = _dataset_scene(np.random.default_rng(s_scene), knotted, canvas)
            img = augment(render(scene, s_render), s_aug)
            sp = out / "scenes" / f"{k:05d}.json"
            ip = out / "images" / f"{k:05d}.{image_format}"
            scene.save(sp)
            written.append(sp)
            save_image(ip, img)
            written.append(ip)
            item = {"id": k, "scene": str(sp.relative_to(out)), "image": str(ip.relative_to(out)),
                    "knotted": knotted, "template": name, "n_cables": len(scene.cables),
                    "n_crossings": len(scene.crossings_gt),
                    "seeds": {"scene": s_scene, "render": s_render, "augment": s_aug}}
            if crops_per_image:
                cp = out / "crops" / f"{k:05d}.npy"
                np.save(cp, _crossing_crops(img, scene, np.random.default_rng(s_crop),
                                            crops_per_image, crossing_crop_fraction))
                written.append(cp)
                item["crops"] = str(cp.relative_to(out))
            manifest["items"].append(item)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        (out / "manifest.json").unlink(missing_ok=True)
        if created:
            shutil.rmtree(out, ignore_errors=True)
        raise
    return manifest
