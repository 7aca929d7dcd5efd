import json
import subprocess
import sys

import pytest

from cpl.cli import main
from cpl.reference import reference_scenario
from cpl.scenario_io import Knowledge, dump
from cpl.sim import read_csv


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1
    return code, json.loads(out[0])


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("scen")
    paths = {}
    for name, s, case in [
        ("ref", reference_scenario(), 1),
        ("case2", reference_scenario(), 2),
        ("case3", reference_scenario(), 3),
        ("uncorrected", reference_scenario(corrected=False), 1),
        ("zero", reference_scenario(perturbed=False), 1),
    ]:
        paths[name] = d / f"{name}.json"
        dump(s, paths[name], Knowledge(case=case))
    paths["unbalanced"] = d / "unbalanced.json"
    paths["unbalanced"].write_text(json.dumps({
        "version": 1, "graph": {"n": 3, "edges": [[1, 2, 1], [2, 3, 1], [3, 1, 1], [1, 3, 1]]},
        "x0": [1, 2, 3], "horizon": 5}))
    paths["bad"] = d / "bad.json"
    paths["bad"].write_text('{"version": 1, "graph": ')
    paths["graph"] = d / "ring.txt"
    paths["graph"].write_text("n 3\nedge 1 2 1\nedge 2 3 1\nedge 3 1 1\n")
    return paths


class TestSimulate:
    def test_writes_csv(self, capsys, files, tmp_path):
        out = tmp_path / "t.csv"
        code, rep = run(capsys, "simulate", files["ref"], "--out", out)
        assert code == 0
        assert max(rep["consensus_error"]) <= 1e-2
        header, data = read_csv(out)
        assert header[:6] == ["t", "x1", "x2", "x3", "x4", "x5"]
        assert abs(data[-1, 1:6] - 1.2).max() <= 1e-2

    def test_malformed(self, capsys, files):
        assert run(capsys, "simulate", files["bad"])[0] == 2

    def test_unbalanced(self, capsys, files):
        code, rep = run(capsys, "simulate", files["unbalanced"])
        assert code == 2 and "balanced" in rep["error"]

    def test_step_violation_is_input_error(self, capsys, files):
        assert run(capsys, "simulate", files["ref"], "--step", "0.01")[0] == 2


class TestVerify:
    def test_reference_admissible(self, capsys, files):
        code, rep = run(capsys, "verify", files["ref"])
        assert code == 0 and rep["admissible"] and rep["coupled"]["passed"]
        assert max(map(abs, rep["beta"])) <= 1e-3 and max(map(abs, rep["alpha"])) <= 1e-3

    def test_uncorrected_not_admissible(self, capsys, files):
        code, rep = run(capsys, "verify", files["uncorrected"])
        assert code == 0 and not rep["admissible"] and rep["sum_beta"] > 0.5

    def test_zero_admissible(self, capsys, files):
        assert run(capsys, "verify", files["zero"])[1]["admissible"]


class TestAttack:
    def test_internal_case1(self, capsys, files):
        code, rep = run(capsys, "attack", files["ref"], "--observer", 1)
        assert code == 0
        assert rep["identifiable"] == [4, 5] and rep["protected"] == [2, 3]
        assert rep["estimates"]["obs_internal_4"] == pytest.approx(-3, abs=1e-2)
        assert rep["estimates"]["obs_internal_5"] == pytest.approx(-1, abs=1e-2)

    def test_case2_refused(self, capsys, files):
        code, rep = run(capsys, "attack", files["case2"], "--observer", 1)
        assert code == 4 and rep["refused"]

    def test_case2_forced(self, capsys, files):
        code, rep = run(capsys, "attack", files["case2"], "--observer", 1, "--target", 4, "--force")
        assert code == 0 and "forced" in rep

    def test_case3_refuses_external_only(self, capsys, files):
        assert run(capsys, "attack", files["case3"], "--kind", "external", "--target", 2, "--intercepted", "2,3")[0] == 4
        assert run(capsys, "attack", files["case3"], "--observer", 1, "--target", 5)[0] == 0

    def test_external(self, capsys, files, tmp_path):
        out = tmp_path / "ext.csv"
        code, rep = run(capsys, "attack", files["ref"], "--kind", "external", "--target", 2,
                        "--intercepted", "2,3", "--out", out)
        assert code == 0 and rep["estimates"]["obs_external_2"] == pytest.approx(2, abs=1e-2)
        assert read_csv(out)[0][-1] == "obs_external_2"

    def test_external_missing_output(self, capsys, files):
        assert run(capsys, "attack", files["ref"], "--kind", "external", "--target", 2, "--intercepted", "2")[0] == 2

    def test_island(self, capsys, files):
        code, rep = run(capsys, "attack", files["ref"], "--kind", "island", "--observer", 1, "--island", "2,3")
        assert code == 0 and rep["estimates"]["obs_island_1-2-3"] == pytest.approx(3.5, abs=1e-2)

    def test_unidentifiable_target(self, capsys, files):
        assert run(capsys, "attack", files["ref"], "--observer", 1, "--target", 2)[0] == 2


class TestIndist:
    def test_island(self, capsys, files, tmp_path):
        code, rep = run(capsys, "indist", files["ref"], "--construction", "island", "--agent", 1,
                        "--delta-x3", "3=1", "--out", tmp_path)
        assert code == 0 and rep["indistinguishable"]
        assert rep["x0_alternative"] == [3, 1, 6, -3, -1]
        assert rep["max_dy"]["3"] >= 0.5
        assert (tmp_path / "alternative.json").exists()

    def test_alternative_file_reloads(self, capsys, files, tmp_path):
        run(capsys, "indist", files["ref"], "--construction", "beta_exchange", "--i", 4, "--k", 5,
            "--beta-ik", 1, "--d", 3, "--out", tmp_path)
        code, rep = run(capsys, "simulate", tmp_path / "alternative.json")
        assert code == 0 and max(rep["consensus_error"]) <= 1e-2

    def test_missing_parameters(self, capsys, files, tmp_path):
        assert run(capsys, "indist", files["ref"], "--construction", "alpha_shift", "--out", tmp_path)[0] == 2


class TestGraphCommands:
    def test_islands(self, capsys, files):
        code, rep = run(capsys, "islands", files["ref"], "--agent", 1)
        assert code == 0 and rep["count"] == 2
        assert {"nodes": [1, 2, 3], "V2": [2], "V3": [3], "V4": []} in rep["islands"]

    def test_classify_family(self, capsys):
        code, rep = run(capsys, "classify", "--family", "stacked_prism", "--family-args", 3, 3)
        assert code == 0 and rep["all_private"]

    def test_classify_graph_text(self, capsys, files):
        code, rep = run(capsys, "classify", files["graph"], "--target", 1, "--intercepted", "1,2")
        assert rep["all_private"] and rep["external"]["identifiable"]

    def test_classify_reference(self, capsys, files):
        rep = run(capsys, "classify", files["ref"])[1]
        assert not rep["all_private"] and rep["identifiable"]["1"] == [4, 5]


class TestReproduce:
    def test_default_passes(self, capsys, tmp_path):
        code, rep = run(capsys, "reproduce-paper", "--out", tmp_path)
        assert code == 0 and rep["passed"]
        assert len(list(tmp_path.glob("*.csv"))) == 4

    def test_short_horizon_fails(self, capsys, tmp_path):
        code, rep = run(capsys, "reproduce-paper", "--out", tmp_path, "--horizon", 2)
        assert code == 1 and not rep["checks"]["consensus"]["passed"]

    def test_uncorrected_sign(self, capsys, tmp_path):
        code, rep = run(capsys, "reproduce-paper", "--out", tmp_path, "--uncorrected-sign", "--horizon", 5)
        assert code == 1 and not rep["checks"]["admissibility"]["passed"] and rep["sum_beta"] > 0.5


def test_console_script_exit_code(files):
    proc = subprocess.run([sys.executable, "-m", "cpl.cli", "attack", str(files["case2"]), "--observer", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 4
    assert json.loads(proc.stdout)["refused"]
