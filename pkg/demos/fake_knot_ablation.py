"""Why cancellation matters: fake knots with and without sequence simplification.

Both variants see identical scenes, images and classifier noise. Only the
simplification step differs, and that alone flips every verdict.

    python3 demos/fake_knot_ablation.py [trials]
"""

import sys

from cabletrace import harness as h

if __name__ == "__main__":
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    reports = []
    for tier in ("C1", "C3"):
        for cfg in (h.PipelineConfig(), h.PipelineConfig(ablations=("no_cancel",))):
            r = h.run_tier(tier, cfg, trials=n, seed=0)
            reports.append(r)
            print(f"{tier} {r.variant:>5}: {r.n_success}/{r.n_trials}  failures {r.failure_counts}")
    print()
    print(h.emit_report(reports, "md"))
    # a sample of what -CC reports on a fake knot
    t = reports[-1].trials[0]["views"][0]
    print(f"-CC on a fake knot: raw code {t['code']!r} left as is, {t['n_knots']} knot(s) reported")
