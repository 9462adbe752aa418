import json
from pathlib import Path

import numpy as np
import pytest

from eidlab import cli, experiments
from eidlab.approx import ConvergenceLog
from eidlab.errors import ValidationError
from eidlab.experiments import ExperimentResult, emit_plotdata, plotdata_csv
from eidlab.gasket import eigenratio_profile, sg_graph

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_writes_csvs_and_manifest(tmp_path, capsys):
    cfg = write(tmp_path, "[experiment]\nname = currents\nseed = 3\n[parameters]\ngraphs = 5\nmax_vertices = 12\n")
    out = tmp_path / "out"
    assert cli.main(["currents", "--config", cfg, "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 3 and man["status"] == "pass"
    assert man["inputs"][0]["path"].endswith("c.ini") and len(man["inputs"][0]["sha256"]) == 64
    assert man["parameters"]["graphs"] == 5
    assert man["threads"] == 1
    assert set(man["outputs"]) <= {f.name for f in out.iterdir()}
    assert "currents-check: pass" in capsys.readouterr().out


def test_identical_runs_are_byte_identical(tmp_path):
    cfg = write(tmp_path, "[experiment]\nname = cones\nseed = 11\n[parameters]\ncurves = 20\nsteps = 30\ngrid = 17\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["cones", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["cones", "--config", cfg, "--out", str(b)]) == 0
    for f in a.glob("*.csv"):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_seed_override_changes_output(tmp_path):
    cfg = write(tmp_path, "[experiment]\nname = currents\n[parameters]\ngraphs = 3\nmax_vertices = 10\n")
    cli.main(["currents", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.main(["currents", "--config", cfg, "--seed", "5", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "currents.csv").read_bytes() != (tmp_path / "b" / "currents.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["seed"] == 5


@pytest.mark.parametrize("text", [
    "[experiment]\nname = axioms\n[parameters]\np = 0.5\n",
    "[experiment]\nname = gasket\n[parameters]\nmax_level = 12\n",
    "[experiment]\nname = axioms\n[parameters]\ntrails = 1\n",
])
def test_config_errors_exit_two(tmp_path, capsys, text):
    cfg = write(tmp_path, text)
    name = "gasket" if "gasket" in text else "axioms"
    assert cli.main([name, "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "parameters." in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_usage_errors_exit_two(tmp_path):
    cfg = write(tmp_path, "[experiment]\nname = axioms\n")
    assert cli.main(["axioms"]) == 2
    assert cli.main(["nonsense", "--config", cfg]) == 2
    assert cli.main(["axioms", "--config", str(tmp_path / "none.ini")]) == 2
    assert cli.main(["axioms", "--config", cfg, "--seed", "-4"]) == 2


def test_thread_variable(monkeypatch, tmp_path):
    assert cli.worker_cap({}) == 1
    assert cli.worker_cap({"EIDLAB_THREADS": "4"}) == 4
    with pytest.raises(ValidationError):
        cli.worker_cap({"EIDLAB_THREADS": "zero"})
    monkeypatch.setenv("EIDLAB_THREADS", "0")
    cfg = write(tmp_path, "[experiment]\nname = axioms\n")
    assert cli.main(["axioms", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_failing_check_exits_one(monkeypatch, tmp_path, capsys):
    def bad(params, rng):
        res = ExperimentResult("preiss")
        res.tables["x.csv"] = "a\n1\n"
        res.check("always fails", False, "detail here")
        return res

    monkeypatch.setitem(experiments.RUNNERS, "preiss", bad)
    cfg = write(tmp_path, "[experiment]\nname = preiss\n")
    assert cli.main(["preiss", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "FAIL  always fails  (detail here)" in capsys.readouterr().out
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["status"] == "fail"


def test_crashing_run_leaves_no_output(monkeypatch, tmp_path, capsys):
    def boom(params, rng):
        raise RuntimeError("solver diverged")

    monkeypatch.setitem(experiments.RUNNERS, "preiss", boom)
    cfg = write(tmp_path, "[experiment]\nname = preiss\n")
    assert cli.main(["preiss", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert "preiss: RuntimeError: solver diverged" in capsys.readouterr().err
    assert sorted(p.name for p in tmp_path.iterdir()) == ["c.ini"]


def test_rng_is_philox():
    a = cli.make_rng(7).random(4)
    b = np.random.Generator(np.random.Philox(key=7)).random(4)
    assert np.array_equal(a, b)


def test_plotdata_headers(tmp_path):
    prof = eigenratio_profile(sg_graph(2), taus=(0.1,))
    assert plotdata_csv([prof]).splitlines() == ["m,tau,fraction", f"2,0.1,{prof.fractions[0.1]!r}"]
    assert plotdata_csv(ConvergenceLog([(1, 0.5, 0.0)])) == "i,sup_gap\n1,0.5\n"
    path = emit_plotdata(ConvergenceLog([]), tmp_path / "p.csv")
    assert path.read_text() == "i,sup_gap\n"


def test_shipped_configs_parse():
    from eidlab.config import parse_config
    names = {parse_config(p).experiment for p in CONFIGS.glob("*.ini")}
    assert names == set(experiments.RUNNERS)


def test_axioms_on_graph_file(tmp_path):
    (tmp_path / "g.txt").write_text("[edges]\n0 1 1.0\n1 2 2.0\n2 3 0.5\n3 0 1.0\n0 2 1.0\n")
    cfg = write(tmp_path, "[experiment]\nname = axioms\n[parameters]\ntrials = 20\ngraph = g.txt\n")
    assert cli.main(["axioms", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert len(man["inputs"]) == 2
