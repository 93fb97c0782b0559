import csv
import io
import json

import pytest

from coevolve import scenarios
from coevolve.cli import main


@pytest.fixture
def scenario_files(tmp_path):
    sc = scenarios.max_of_list()
    script = tmp_path / "script.json"
    sc.write_script(script)
    problems = tmp_path / "problems.jsonl"
    p = sc.problem
    problems.write_text(json.dumps({
        "id": p.id, "statement": p.statement, "reference_solution": p.reference_solution,
        "eval_tests": [{"input": t.input, "output": t.output} for t in p.eval_tests],
    }) + "\n")
    return sc, script, problems


def run_args(sc, script, problems, out):
    c = sc.config
    return ["run", str(problems), "--script", str(script), "--out-dir", str(out), "--n-codes", str(c.n_codes),
            "--n-tests", str(c.n_tests), "--n-hints", str(c.n_hints), "--n-probes", str(c.n_probes),
            "--workers", "1", "--no-timestamp"]


def test_run_and_metrics(tmp_path, scenario_files, capsys):
    sc, script, problems = scenario_files
    out = tmp_path / "out"
    assert main(run_args(sc, script, problems, out)) == 0
    log = json.loads((out / "problems" / "max-of-list.json").read_text())
    assert log["status"] == "ok" and log["metrics"]["bon_acc"] == 1.0
    capsys.readouterr()
    assert main(["metrics", str(problems), str(out)]) == 0
    recomputed = json.loads(capsys.readouterr().out)
    assert recomputed["max-of-list"] == log["metrics"]


def test_run_exit_code_on_failure(tmp_path, scenario_files):
    sc, _, problems = scenario_files
    empty = tmp_path / "empty.json"
    empty.write_text("[]")
    assert main(run_args(sc, empty, problems, tmp_path / "out")) == 1


def test_run_rejects_bad_config(tmp_path, scenario_files):
    sc, script, problems = scenario_files
    with pytest.raises(ValueError):
        main(run_args(sc, script, problems, tmp_path / "o") + ["--n-tests", "3"])


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_theory_thresholds(capsys):
    assert main(["theory", "thresholds", "--eps1", "0.2", "--eps2", "0.1"]) == 0
    (row,) = read_csv(capsys.readouterr().out)
    assert row["rho_c_star"] == "-1/9" and row["rho_t_star"] == "1/9"


def test_theory_posterior_csv(tmp_path):
    out = tmp_path / "post.csv"
    assert main(["theory", "posterior", "--trials", "20000", "--out", str(out)]) == 0
    rows = read_csv(out.read_text())
    assert [int(r["s"]) for r in rows] == list(range(17))
    assert sum(int(r["count"]) for r in rows) == 20000


def test_theory_separation(capsys):
    assert main(["theory", "separation", "--probes", "1", "8", "--trials", "50", "--n", "40"]) == 0
    rows = read_csv(capsys.readouterr().out)
    assert [r["R"] for r in rows] == ["1", "8"]


def test_select(tmp_path, capsys):
    cands = tmp_path / "c.json"
    cands.write_text(json.dumps([
        {"id": "bad", "source": "print(0)\n"},
        {"id": "a", "source": scenarios.CORRECT_SCAN},
        {"id": "b", "source": scenarios.CORRECT_SORT},
    ]))
    probes = tmp_path / "p.json"
    probes.write_text(json.dumps(scenarios.PROBES))
    assert main(["select", str(cands), str(probes)]) == 0
    sel = json.loads(capsys.readouterr().out)
    assert sel["chosen"] == "a"
    assert sel["clusters"][sel["chosen_cluster"]]["members"] == ["a", "b"]
