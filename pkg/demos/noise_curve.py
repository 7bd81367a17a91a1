"""Trace coverage as the oracle's next-point guess gets noisier.

    python3 demos/noise_curve.py
"""

import numpy as np

from cabletrace.predictors import OraclePredictor
from cabletrace.render import augment, render
from cabletrace.templates import KNOTTED, knot_template, random_pose
from cabletrace.tracer import TraceConfig, arc_coverage, trace_cable

if __name__ == "__main__":
    rng = np.random.default_rng(0)
    cases = []
    for k in range(12):
        name = KNOTTED[k % len(KNOTTED)]
        scene = knot_template(name, 0.85, random_pose(rng, name, 0.85))
        cases.append((scene, augment(render(scene, k), k + 1)))
    print("sigma  mean coverage  endpoint reached")
    for sigma in (0.0, 1.0, 2.0, 3.0, 4.0):
        cov, ends = [], 0
        for k, (scene, img) in enumerate(cases):
            e = scene.endpoints[0]
            tr = trace_cable(img, np.round(e[0]), OraclePredictor(scene, sigma, seed=k),
                             TraceConfig(endpoints=list(e)))
            cov.append(arc_coverage(tr, scene.cables[0].points))
            ends += tr.termination == "endpoint_reached"
        print(f"{sigma:5.1f}  {np.mean(cov):13.3f}  {ends:>8}/{len(cases)}")
