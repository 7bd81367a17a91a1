"""One image end to end: render a knot and a fake knot, trace, read the crossings, simplify, plan grasps.

    python3 demos/knot_walkthrough.py [out_dir]
"""

import sys
from pathlib import Path

import numpy as np

from cabletrace import harness as h
from cabletrace.render import augment, render, save_image
from cabletrace.templates import knot_template


def show(name, out):
    scene = knot_template(name, 0.9)
    img = augment(render(scene, 1), 2)
    save_image(out / f"{name}.png", img)
    res = h.run_pipeline(img, scene, h.PipelineConfig(epsilon=0.1))
    print(f"== {name}")
    print(f"   trace: {len(res.trace)} points, stopped by {res.trace.termination}")
    for k, obs in enumerate(res.crossings):
        flag = " (corrected)" if "corrected" in obs.flags else ""
        print(f"   crossing {k} at {np.round(obs.position).astype(int).tolist()}: "
              f"{' then '.join(obs.labels)}{flag}")
    print(f"   raw code:        {res.raw.code() or '(empty)'}")
    print(f"   simplified code: {res.simplified.code() or '(empty)'}")
    if not res.knots:
        print("   verdict: no knot")
        return
    knot = res.knots[0]
    print(f"   verdict: knot spanning encounters {knot.start_idx}..{knot.end_idx}")
    plan = res.plans[0]
    if plan.feasible:
        print(f"   cage at {np.round(plan.cage_point).astype(int).tolist()}, "
              f"pinch at {np.round(plan.pinch_point).astype(int).tolist()}")


if __name__ == "__main__":
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
    out.mkdir(parents=True, exist_ok=True)
    for name in ("overhand", "figure_eight", "fake_overhand"):
        show(name, out)
    print(f"images in {out}/")
