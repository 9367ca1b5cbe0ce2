import json

from click.testing import CliRunner

from reshuffle.cli import main


def _write(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def test_run_rr_and_fit(tmp_path):
    cfg = _write(tmp_path / "c.json", {"method": "RR", "R": 1, "s": 0.75, "q": 0.5, "K": 5000, "seed": 1,
                                       "log_stride": 50, "problem": "example1"})
    runner = CliRunner()
    res = runner.invoke(main, ["run", "--config", cfg, "--csv", str(tmp_path / "t.csv")])
    assert res.exit_code == 0, res.output
    out = json.loads(res.output)
    assert out["method"] == "RR" and out["K"] == 5000 and out["dist_K"] > 0
    res = runner.invoke(main, ["fit", "--csv", str(tmp_path / "t.csv"), "--column", "dist", "--kmin", "50"])
    assert res.exit_code == 0, res.output
    assert -1.0 < json.loads(res.output)["slope"] < -0.5


def test_run_birr_with_inline_problem(tmp_path):
    problem = {"type": "quadratic", "n": 1, "m": 2, "seed": None,
               "components": [{"P": [[1.0]], "q": [1.0], "r": 0.5}, {"P": [[2.0]], "q": [-1.0], "r": 0.5}]}
    cfg = _write(tmp_path / "c.json", {"method": "BIRR", "q": 0.5, "K": 3000, "seed": 2, "log_stride": 100,
                                       "problem": problem})
    res = CliRunner().invoke(main, ["run", "--config", cfg, "--csv", str(tmp_path / "t.csv")])
    assert res.exit_code == 0, res.output
    out = json.loads(res.output)
    assert out["output_dist"] < out["suffix_dist"]
    last = (tmp_path / "t.csv").read_text().strip().splitlines()
    assert last[0].endswith("bhat_norm,output_dist") and last[-1].split(",")[-1] != ""


def test_run_requires_problem(tmp_path):
    cfg = _write(tmp_path / "c.json", {"method": "RR"})
    res = CliRunner().invoke(main, ["run", "--config", cfg])
    assert res.exit_code == 2


def test_run_reports_divergence(tmp_path):
    cfg = _write(tmp_path / "c.json", {"method": "RR", "R": 10, "K": 100, "problem": "quad7"})
    res = CliRunner().invoke(main, ["run", "--config", cfg])
    assert res.exit_code == 1 and "diverged" in res.output


def test_compare_writes_report(tmp_path):
    out = tmp_path / "r.json"
    res = CliRunner().invoke(main, ["compare", "--problem", "example1", "--methods", "rr,sgd", "--seeds", "2",
                                    "--K", "5000", "--out", str(out), "--csv-dir", str(tmp_path / "csv")])
    assert res.exit_code == 0, res.output
    doc = json.loads(out.read_text())
    assert list(doc["methods"]) == ["RR", "SGD"]
    assert (tmp_path / "csv" / "sgd_fgap.csv").exists()


def test_suite_empty_problem_set(tmp_path):
    out = tmp_path / "s.json"
    res = CliRunner().invoke(main, ["suite", "--problems", "", "--out", str(out), "--strict"])
    assert res.exit_code == 0
    assert json.loads(out.read_text())["checks"] == {}


def test_fit_rejects_unknown_column(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("k,dist\n1,1\n")
    res = CliRunner().invoke(main, ["fit", "--csv", str(path), "--column", "nope"])
    assert res.exit_code == 2


def test_oracle_command():
    res = CliRunner().invoke(main, ["oracle", "--problem", "example1"])
    assert res.exit_code == 0
    assert json.loads(res.output)["per_sigma"]["(2,1)"]["v"] == [-1.0]
