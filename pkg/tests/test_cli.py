import json
import subprocess
import sys

import numpy as np
import pytest

from cabletrace.cli import main
from conftest import run_cli_chain


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    return out, run_cli_chain(out)


def test_chain_writes_expected_files(chain):
    out, files = chain
    names = {p.relative_to(out).as_posix() for p in files}
    for want in ("gen/scene_0000.json", "gen/image_0000.png", "rand/scene_0001.json",
                 "trace.json", "crossings.json", "topology.json", "demo.json", "replay.json",
                 "data/manifest.json", "eval/C3_full.json", "eval/C3_-CC.json", "report.md"):
        assert want in names


def test_outputs_are_consistent(chain):
    out, _ = chain
    topo = json.loads((out / "topology.json").read_text())
    assert topo["verdict"] == "knot"
    md = (out / "report.md").read_text().splitlines()
    assert md[2] == "| C3 | 0/2 | 2/2 |"
    replay = json.loads((out / "replay.json").read_text())
    np.testing.assert_allclose(replay["points"], [[250, 250], [260, 270]], atol=1e-6)
    assert replay["kinds"] == ["pick", "place"]


def test_bad_input_exits_with_message(tmp_path, capsys):
    assert main(["report", "--in", str(tmp_path), "--format", "md"]) == 0
    rc = main(["trace", "--image", str(tmp_path / "missing.png"), "--start", "1,2",
               "--predictor", "analytic", "--out", str(tmp_path / "t.json")])
    assert rc == 2 and "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["generate", "--template", "overhand", "--random", "near_parallel",
              "--out", str(tmp_path)])


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "cabletrace", "generate", "--template", "straight",
                        "--out", str(tmp_path), "--format", "pgm"],
                       capture_output=True, text=True, check=True)
    assert "wrote 1 scene" in r.stdout
    assert (tmp_path / "image_0000.pgm").exists()
