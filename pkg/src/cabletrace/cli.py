"""Command-line entry point: ``cabletrace <command> ...`` or ``python -m cabletrace``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import crossing as cx
from . import harness as hz
from . import imitation as im
from . import topology as tp
from .predictors import AnalyticPredictor, OraclePredictor
from .render import augment, load_image, render, save_image
from .scene import METHODS, Scene, generate_random_scene
from .templates import TEMPLATES, knot_template, random_pose
from .tracer import Trace, TraceConfig, trace_cable


def _pair(text, n=2, sep=","):
    vals = [float(v) for v in text.split(sep)]
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _points(text):
    return [_pair(p) for p in text.split(";") if p.strip()]


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=1) + "\n")


def cmd_generate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    canvas = tuple(args.canvas)
    children = np.random.SeedSequence(args.seed).spawn(args.count)
    for k, child in enumerate(children):
        s_scene, s_render, s_aug = (int(v) for v in child.generate_state(3))
        if args.template:
            if args.count == 1 and not args.random_pose:
                pose = None
            else:
                pose = random_pose(np.random.default_rng(s_scene), args.template, args.scale, canvas)
            scene = knot_template(args.template, args.scale, pose, canvas)
        else:
            scene = generate_random_scene(s_scene, args.random, canvas, args.n_cables)
        img = render(scene, s_render)
        if not args.no_augment:
            img = augment(img, s_aug)
        scene.save(out / f"scene_{k:04d}.json")
        save_image(out / f"image_{k:04d}.{args.format}", img)
    print(f"wrote {args.count} scene(s) to {out}")
    return 0


def cmd_dataset(args):
    m = hz.generate_dataset(args.out, args.count, args.seed, args.knotted_fraction,
                            tuple(args.canvas), args.format, args.crops,
                            args.crossing_crop_fraction)
    print(f"wrote {len(m['items'])} items to {args.out}")
    return 0


def cmd_trace(args):
    image = load_image(args.image)
    scene = Scene.load(args.scene) if args.scene else None
    if args.predictor == "oracle":
        if scene is None:
            raise SystemExit("the oracle predictor needs --scene")
        sigma, p_fail = args.noise
        pred = OraclePredictor(scene, sigma, p_fail, args.seed)
    else:
        pred = AnalyticPredictor()
    ends = [e for pair in scene.endpoints for e in pair] if scene else []
    cfg = TraceConfig(max_steps=args.max_steps, endpoints=ends)
    trace = trace_cable(image, args.start, pred, cfg)
    trace.save(args.out)
    print(f"{len(trace)} points, {trace.termination}")
    return 0


def cmd_analyze_crossings(args):
    image = load_image(args.image)
    trace = Trace.load(args.trace)
    if args.classifier == "oracle":
        if not args.scene:
            raise SystemExit("the oracle classifier needs --scene")
        clf = cx.OracleClassifier(Scene.load(args.scene), args.epsilon, args.seed)
    else:
        clf = cx.PhotometricClassifier()
    obs = cx.detect_crossings(trace.points, args.merge_radius)
    cx.classify_all(clf, image, trace.points, obs)
    cx.correct_crossings(obs)
    cx.save_crossings(args.out, obs)
    print(f"{len(obs)} crossing(s)")
    return 0


def cmd_analyze_topology(args):
    image = load_image(args.image)
    trace = Trace.load(args.trace)
    obs = cx.load_crossings(args.crossings)
    raw = tp.build_sequence(obs, trace)
    simple = raw if args.no_cancel else tp.cancel_crossings(raw)
    knots = tp.detect_knots(simple)
    plans = [tp.select_cage_pinch(k, simple, trace.points, image, args.threshold)
             for k in knots[:1]]
    report = tp.topology_report(raw, simple, knots, plans)
    tp.save_report(args.out, report)
    print(f"raw: {raw.code() or '(empty)'}; simplified: {simple.code() or '(empty)'}; "
          f"{report['verdict']}")
    return 0


def cmd_demo_record(args):
    trace = Trace.load(args.trace)
    obs = cx.load_crossings(args.crossings) if args.crossings else []
    demo = im.record(trace.points, obs, args.points, args.mode)
    demo.save(args.out)
    print(f"recorded {len(demo.actions)} action(s)")
    return 0


def cmd_demo_replay(args):
    demo = im.Demonstration.load(args.demo)
    trace = Trace.load(args.trace)
    obs = cx.load_crossings(args.crossings) if args.crossings else []
    pts = im.replay(demo, trace.points, obs)
    _write_json(args.out, {"points": pts.tolist(),
                           "kinds": [a.kind for a in demo.actions]})
    print(f"replayed {len(pts)} point(s)")
    return 0


def cmd_evaluate(args):
    ablations = tuple(a for a, on in (("no_cancel", args.no_cancel),
                                      ("analytic_tracer", args.analytic_tracer)) if on)
    cfg = hz.PipelineConfig(sigma=args.noise[0], p_fail=args.noise[1],
                            classifier=args.classifier, epsilon=args.epsilon,
                            ablations=ablations)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = hz.run_tier(args.tier, cfg, args.trials, args.seed,
                      out_dir=out if args.artifacts else None, timing=args.timing)
    rep.save(out / f"{args.tier}_{cfg.variant}.json")
    rate = "n/a" if rep.success_rate is None else f"{rep.n_success}/{rep.n_trials}"
    print(f"{args.tier} {cfg.variant}: {rate}")
    bad = rep.invariant_failures
    for m in bad:
        print(f"invariant violated: {m}", file=sys.stderr)
    return 1 if bad else 0


def cmd_report(args):
    reps = hz.load_reports(args.indir)
    text = hz.emit_report(reps, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cabletrace", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render template or random scenes")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--template", choices=sorted(TEMPLATES))
    src.add_argument("--random", choices=METHODS, metavar="METHOD")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--random-pose", action="store_true")
    g.add_argument("--n-cables", type=int, default=1)
    g.add_argument("--canvas", type=int, nargs=2, default=[512, 512], metavar=("W", "H"))
    g.add_argument("--format", choices=("png", "pgm"), default="png")
    g.add_argument("--no-augment", action="store_true")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("dataset", help="write a dataset with a manifest")
    d.add_argument("--count", type=int, default=300)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--out", required=True)
    d.add_argument("--knotted-fraction", type=float, default=0.5)
    d.add_argument("--canvas", type=int, nargs=2, default=[512, 512], metavar=("W", "H"))
    d.add_argument("--format", choices=("png", "pgm"), default="png")
    d.add_argument("--crops", type=int, default=0, help="64x64 training crops per image")
    d.add_argument("--crossing-crop-fraction", type=float, default=0.95)
    d.set_defaults(func=cmd_dataset)

    t = sub.add_parser("trace", help="trace one cable")
    t.add_argument("--image", required=True)
    t.add_argument("--scene")
    t.add_argument("--start", type=_pair, required=True, help='"x,y"')
    t.add_argument("--predictor", choices=("analytic", "oracle"), default="oracle")
    t.add_argument("--noise", type=_pair, default=[0.0, 0.0], help='"sigma,p_fail"')
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-steps", type=int, default=400)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_trace)

    a = sub.add_parser("analyze", help="crossing or topology analysis")
    asub = a.add_subparsers(dest="what", required=True)
    ac = asub.add_parser("crossings")
    ac.add_argument("--trace", required=True)
    ac.add_argument("--image", required=True)
    ac.add_argument("--scene")
    ac.add_argument("--classifier", choices=("photometric", "oracle"), default="photometric")
    ac.add_argument("--epsilon", type=float, default=0.0)
    ac.add_argument("--seed", type=int, default=0)
    ac.add_argument("--merge-radius", type=float, default=cx.MERGE_RADIUS)
    ac.add_argument("--out", required=True)
    ac.set_defaults(func=cmd_analyze_crossings)
    at = asub.add_parser("topology")
    at.add_argument("--crossings", required=True)
    at.add_argument("--trace", required=True)
    at.add_argument("--image", required=True)
    at.add_argument("--no-cancel", action="store_true")
    at.add_argument("--threshold", type=float, default=tp.DEFAULT_T)
    at.add_argument("--out", required=True)
    at.set_defaults(func=cmd_analyze_topology)

    dm = sub.add_parser("demo", help="record or replay demonstrations")
    dsub = dm.add_subparsers(dest="what", required=True)
    dr = dsub.add_parser("record")
    dr.add_argument("--trace", required=True)
    dr.add_argument("--crossings")
    dr.add_argument("--points", type=_points, required=True, help='"x,y;x,y;..."')
    dr.add_argument("--mode", choices=im.MODES, default="absolute_arc_length")
    dr.add_argument("--out", required=True)
    dr.set_defaults(func=cmd_demo_record)
    dp = dsub.add_parser("replay")
    dp.add_argument("--demo", required=True)
    dp.add_argument("--trace", required=True)
    dp.add_argument("--crossings")
    dp.add_argument("--out", required=True)
    dp.set_defaults(func=cmd_demo_replay)

    e = sub.add_parser("evaluate", help="run one evaluation tier")
    e.add_argument("--tier", choices=sorted(hz.TIERS), required=True)
    e.add_argument("--trials", type=int, default=30)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--no-cancel", action="store_true")
    e.add_argument("--analytic-tracer", action="store_true")
    e.add_argument("--noise", type=_pair, default=[0.0, 0.0], help='oracle "sigma,p_fail"')
    e.add_argument("--classifier", choices=("oracle", "photometric"), default="oracle")
    e.add_argument("--epsilon", type=float, default=0.0)
    e.add_argument("--timing", action="store_true", help="record per-trial runtimes")
    e.add_argument("--artifacts", action="store_true", help="save per-trial scene/trace files")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="tabulate evaluation reports")
    r.add_argument("--in", dest="indir", required=True)
    r.add_argument("--format", choices=("md", "csv", "json"), default="md")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
