import json
import shutil
import subprocess

import pytest

from conftest import MODELS
from rsb.cli import main

TWO_GOAL = str(MODELS / "two_goal.json")
FOUR_CLASS = str(MODELS / "four_class.json")


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check(capsys, tmp_path):
    assert run(capsys, "check", FOUR_CLASS)[:2] == (0, "deadlock-free: true\n")
    dead = tmp_path / "dead.json"
    dead.write_text(json.dumps({"states": ["x", "y"], "alphabet": ["go"], "transitions": [["x", "go", "y"]]}))
    assert run(capsys, "check", str(dead))[0] == 1


def test_minimize_prints_block_count(capsys, tmp_path):
    part = tmp_path / "p.json"
    code, out, _ = run(capsys, "minimize", FOUR_CLASS, "-o", str(part))
    assert code == 0 and out.startswith("blocks: 6\n")
    blocks = json.loads(part.read_text())["blocks"]
    assert sorted(blocks) == [["a1", "a2"], ["a3", "a4"], ["b1", "b2"], ["b3", "b4"], ["c1", "c2"], ["d1", "d2"]]


def test_ecs(capsys):
    code, out, _ = run(capsys, "ecs", FOUR_CLASS, "--source", "c", "--target", "@b3,b4")
    assert code == 0
    assert out.splitlines()[0] == "ecs: {b3, b4, c1, c2}"
    assert "c1=2" in out
    code, out, _ = run(capsys, "--json", "ecs", FOUR_CLASS, "--source", "d", "--target", "c", "--modality", "W")
    assert json.loads(out)["ecs"] == ["c1", "c2", "d1", "d2"]
    assert run(capsys, "ecs", FOUR_CLASS, "--source", "c", "--target", "c")[0] == 2


def test_quotient_with_sidecar(capsys, tmp_path):
    part, quo = tmp_path / "p.json", tmp_path / "q.json"
    run(capsys, "minimize", FOUR_CLASS, "-o", str(part))
    code, out, _ = run(capsys, "quotient", FOUR_CLASS, "--partition", str(part), "-o", str(quo))
    assert code == 0 and "6 states, 9 minimal formulas" in out
    data = json.loads(quo.read_text())
    assert "[d1,d2] W {[c1,c2]}" in data["alphabet"]
    sidecar = json.loads((tmp_path / "q.blocks.json").read_text())
    assert sidecar["[d1,d2]"] == ["d1", "d2"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"blocks": [["a1", "a2", "a3", "a4"], ["b1", "b2", "b3", "b4"], ["c1", "c2"], ["d1", "d2"]]}))
    assert run(capsys, "quotient", FOUR_CLASS, "--partition", str(bad))[0] == 1


def test_synth_needs_memory_on_two_goal(capsys, tmp_path):
    ctl = tmp_path / "c.json"
    code, out, _ = run(capsys, "synth", TWO_GOAL, "--spec", "G F a & G F b", "-o", str(ctl))
    assert code == 0
    assert "realizable: true" in out and "memory states: 2" in out and "winning states: all" in out
    code, out, _ = run(capsys, "run", TWO_GOAL, str(ctl), "--start", "0", "--steps", "6", "--seed", "1")
    assert code == 0
    visited = {line.split()[1] for line in out.splitlines()}
    assert visited == {"0", "1", "2"}


def test_synth_unrealizable(capsys):
    assert run(capsys, "synth", FOUR_CLASS, "--spec", "G F a & G F b")[:2] == (1, "realizable: false\n")


def test_usage_errors(capsys):
    code, _, err = run(capsys, "minimize")
    assert code == 2 and "usage:" in err
    code, _, err = run(capsys, "minimize", "/no/such/model.json")
    assert code == 2 and "cannot read" in err
    assert run(capsys, "synth", TWO_GOAL, "--spec", "F a")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def test_json_diagnostics(capsys):
    code, _, err = run(capsys, "--json", "check", "/no/such/model.json")
    assert code == 2 and "error" in json.loads(err)


def test_grid_build(capsys, tmp_path):
    out_file = tmp_path / "g.json"
    code, out, _ = run(capsys, "grid-build", "--config", str(MODELS / "robot.cfg"), "--cell-size", "0.5", "-o", str(out_file))
    assert code == 0 and out.startswith("grid states:")
    assert json.loads(out_file.read_text())["states"][-1]["id"] == "Bad"


CALM_ROOM = """\
domain = [0, 0, 2, 2]
cell_size = 0.5
control_bound = [0.5, 0.5]
control_step = 0.5
disturbance = [0.0, 0.0]
initial_region = "A"
region.A = [[0, 0], [0.5, 0], [0.5, 0.5], [0, 0.5]]
region.B = [[1.5, 1.5], [2, 1.5], [2, 2], [1.5, 2]]
"""


def test_grid_sim_calm_room(capsys, tmp_path):
    cfg, csv = tmp_path / "room.cfg", tmp_path / "t.csv"
    cfg.write_text(CALM_ROOM)
    code, out, _ = run(capsys, "grid-sim", "--config", str(cfg), "--steps", "40", "-o", str(csv))
    assert code == 0 and "failed: false" in out
    visits = dict(item.split("=") for item in out.splitlines()[-1][len("visits: "):].split(", "))
    assert int(visits["A"]) >= 2 and int(visits["B"]) >= 2
    assert csv.read_text().startswith("step,x,y,cell,label,u1,u2,w1,w2,regions\n")


def test_grid_sim_unrealizable_on_coarse_cells(capsys):
    # the 0.3 disturbance spans more than half a 0.5 cell, so no goal can be forced
    assert run(capsys, "grid-sim", "--cell-size", "0.5", "--spec", "G F Home")[:2] == (1, "realizable: false\n")


def test_pipeline_artifacts_deterministic(capsys, tmp_path):
    texts = []
    for k in range(2):
        d = tmp_path / str(k)
        d.mkdir()
        run(capsys, "minimize", FOUR_CLASS, "-o", str(d / "p.json"))
        run(capsys, "quotient", FOUR_CLASS, "--partition", str(d / "p.json"), "-o", str(d / "q.json"))
        run(capsys, "synth", TWO_GOAL, "--spec", "G F a & G F b", "-o", str(d / "c.json"))
        texts.append([(d / f).read_bytes() for f in ("p.json", "q.json", "q.blocks.json", "c.json")])
    assert texts[0] == texts[1]


@pytest.mark.skipif(shutil.which("rsb") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["rsb", "minimize", FOUR_CLASS], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("blocks: 6")
