import functools

import numpy as np
import pytest

from cabletrace.predictors import OraclePredictor
from cabletrace.render import augment, render
from cabletrace.templates import knot_template
from cabletrace.tracer import TraceConfig, trace_cable


@functools.lru_cache(maxsize=None)
def template_case(name, scale=1.0, seed=1):
    """(scene, image, noiseless oracle trace) for a centred template."""
    scene = knot_template(name, scale)
    img = augment(render(scene, seed), seed + 1)
    ends = scene.endpoints[0]
    trace = trace_cable(img, np.round(ends[0]), OraclePredictor(scene),
                        TraceConfig(endpoints=list(ends)))
    return scene, img, trace


@pytest.fixture
def case():
    return template_case


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def run_cli_chain(out, seed=3):
    """Every CLI command once, writing into ``out``; returns the produced files."""
    import json
    from pathlib import Path

    from cabletrace.cli import main

    out = Path(out)
    g = out / "gen"
    assert main(["generate", "--template", "overhand", "--seed", str(seed), "--out", str(g)]) == 0
    assert main(["generate", "--random", "near_parallel", "--n-cables", "2", "--count", "2",
                 "--seed", str(seed), "--out", str(out / "rand")]) == 0
    start = json.loads((g / "scene_0000.json").read_text())["endpoints"][0][0]
    start = ",".join(str(round(v)) for v in start)
    common = ["--image", str(g / "image_0000.png")]
    assert main(["trace", *common, "--scene", str(g / "scene_0000.json"), "--start", start,
                 "--noise", "1.0,0.05", "--seed", str(seed), "--out", str(out / "trace.json")]) == 0
    assert main(["analyze", "crossings", *common, "--trace", str(out / "trace.json"),
                 "--scene", str(g / "scene_0000.json"), "--classifier", "oracle",
                 "--epsilon", "0.2", "--seed", str(seed), "--out", str(out / "crossings.json")]) == 0
    assert main(["analyze", "topology", *common, "--trace", str(out / "trace.json"),
                 "--crossings", str(out / "crossings.json"), "--out", str(out / "topology.json")]) == 0
    assert main(["demo", "record", "--trace", str(out / "trace.json"),
                 "--crossings", str(out / "crossings.json"), "--points", "250,250;260,270",
                 "--mode", "crossing_relative", "--out", str(out / "demo.json")]) == 0
    assert main(["demo", "replay", "--demo", str(out / "demo.json"), "--trace", str(out / "trace.json"),
                 "--crossings", str(out / "crossings.json"), "--out", str(out / "replay.json")]) == 0
    assert main(["dataset", "--count", "4", "--seed", str(seed), "--crops", "2",
                 "--out", str(out / "data")]) == 0
    ev = out / "eval"
    for extra in ([], ["--no-cancel"]):
        assert main(["evaluate", "--tier", "C3", "--trials", "2", "--seed", str(seed),
                     *extra, "--out", str(ev)]) == 0
    for fmt in ("md", "csv", "json"):
        assert main(["report", "--in", str(ev), "--format", fmt,
                     "--out", str(out / f"report.{fmt}")]) == 0
    return sorted(p for p in out.rglob("*") if p.is_file())


# criterion number -> "PASS ..." / "FAIL ..." line, filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
