import csv
import json

import pytest

from ssearch import cli, validate
from ssearch.cli import EXIT_CHECK, EXIT_INPUT, EXIT_OK, InputError, load_config, main, render_table


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


SMALL = {"schema_version": 1, "dgp": {"n_consumers": 60, "n_products": 3, "seed": 4}}


def test_schema_errors_name_the_field(tmp_path):
    bad = dict(SMALL, dgp={"n_consumers": 0})
    with pytest.raises(InputError, match="dgp/n_consumers"):
        load_config(write_cfg(tmp_path / "c.json", bad))
    with pytest.raises(InputError, match="schema_version"):
        load_config(write_cfg(tmp_path / "c.json", {"schema_version": 2}))
    with pytest.raises(InputError, match="<root>"):
        load_config(write_cfg(tmp_path / "c.json", {"schema_version": 1, "extra": 1}))


def test_bad_json_reports_position(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{"schema_version": 1,\n  "dgp": }')
    assert main(["generate", "--config", str(p), "--out", str(tmp_path / "d")]) == EXIT_INPUT
    assert "line 2" in capsys.readouterr().err
    assert main(["generate", "--config", str(tmp_path / "missing.json")]) == EXIT_INPUT


def test_generate_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", SMALL)
    for d in ("a", "b"):
        assert main(["generate", "--config", cfg, "--out", str(tmp_path / d)]) == EXIT_OK
    for name in ("consumers.csv", "dataset.json", "truth.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert main(["generate", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "5"]) == EXIT_OK
    assert (tmp_path / "a" / "consumers.csv").read_bytes() != (tmp_path / "c" / "consumers.csv").read_bytes()


def test_generate_from_preset_column(tmp_path):
    cfg = {"schema_version": 1, "dgp": {"preset": "table2", "column": "(1) purchase only", "scale": 0.02}}
    assert main(["generate", "--config", write_cfg(tmp_path / "c.json", cfg), "--out", str(tmp_path / "d")]) == 0
    with open(tmp_path / "d" / "consumers.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["inspected_rank"] for r in rows} == {"0"}
    assert len({r["consumer_id"] for r in rows}) == 40
    bad = {"schema_version": 1, "dgp": {"preset": "table2", "column": "nope"}}
    assert main(["generate", "--config", write_cfg(tmp_path / "b.json", bad)]) == EXIT_INPUT
    bad = {"schema_version": 1, "dgp": {"column": "full info"}}
    assert main(["generate", "--config", write_cfg(tmp_path / "b.json", bad)]) == EXIT_INPUT


@pytest.fixture
def dataset(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", SMALL)
    assert main(["generate", "--config", cfg, "--out", str(tmp_path / "data")]) == EXIT_OK
    return tmp_path / "data"


def test_estimate_writes_result(tmp_path, dataset):
    cfg = dict(SMALL, estimation={"n_draws": 20, "warmstart_iters": 5, "max_iters": 20})
    out = tmp_path / "est.json"
    code = main(["estimate", "--config", write_cfg(tmp_path / "e.json", cfg), "--data", str(dataset),
                 "--out", str(out), "--seed", "2"])
    assert code == EXIT_OK
    res = json.loads(out.read_text())
    assert len(res["estimates"]) == 7
    assert res["loglik"] == res["loglik_at_hat"]
    assert res["loglik_at_truth"] <= 0 and res["config"] == cfg


def test_estimate_rejects_corrupt_data(tmp_path, dataset, capsys):
    path = dataset / "consumers.csv"
    lines = path.read_text().splitlines()
    lines[4] = lines[4].replace(",", ",x", 1)
    path.write_text("\n".join(lines) + "\n")
    code = main(["estimate", "--config", write_cfg(tmp_path / "e.json", SMALL), "--data", str(dataset)])
    assert code == EXIT_INPUT
    assert "row 5" in capsys.readouterr().err


def test_estimate_rejects_scenario_mismatch(tmp_path, dataset, capsys):
    cfg = dict(SMALL, scenario="purchase_only")
    code = main(["estimate", "--config", write_cfg(tmp_path / "e.json", cfg), "--data", str(dataset)])
    assert code == EXIT_INPUT
    assert "does not match" in capsys.readouterr().err


def test_estimate_rejects_missing_data(tmp_path):
    code = main(["estimate", "--config", write_cfg(tmp_path / "e.json", SMALL), "--data", str(tmp_path / "no")])
    assert code == EXIT_INPUT


def _fake_suite(passed):
    def run(name):
        return [validate.Check("demo", passed, 0.5, 1.0, "", 0.0)]
    return run


def test_validate_exit_codes(tmp_path, monkeypatch, capsys):
    monkeypatch.setattr(validate, "run_suite", _fake_suite(True))
    out = tmp_path / "v.json"
    assert main(["validate", "invariance", "--out", str(out)]) == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["passed"] and rep["checks"][0]["name"] == "demo"
    assert "PASS  demo" in capsys.readouterr().out
    monkeypatch.setattr(validate, "run_suite", _fake_suite(False))
    assert main(["validate", "invariance"]) == EXIT_CHECK


def test_replicate_writes_report(tmp_path):
    out = tmp_path / "rep"
    code = main(["replicate", "table2", "--reps", "2", "--draws", "10", "--scale", "0.02", "--threads", "1",
                 "--column", "full info", "--out", str(out)])
    assert code == EXIT_OK
    rep = json.loads((out / "report.json").read_text())
    assert list(rep["columns"]) == ["full info"] and rep["columns"]["full info"]["n_reps"] == 2
    assert "wall" not in json.dumps(rep) and "per_rep" in (out / "timing.json").read_text()
    assert (out / "table.txt").read_text().startswith("table2")
    assert main(["replicate", "table2", "--column", "nope", "--out", str(out)]) == EXIT_INPUT


def test_render_table():
    col = {"truth": {"gamma1": 1.0}, "mean": {"gamma1": 1.05}, "sd": {"gamma1": 0.1},
           "mean_loglik_truth": -10.0, "mean_loglik_hat": -9.5, "rmse_all": 0.11, "n_failed": 1}
    text = render_table({"table": "t", "title": "demo", "reps": 2, "draws": 5, "scale": 1.0,
                         "columns": {"A": col}})
    assert "1.050 (0.100)" in text and "-9.5" in text and "0.110" in text
    assert "1 replication(s) failed" in text


def test_version_string():
    assert cli.version_string().startswith("v0.")


def test_threads_from(monkeypatch):
    monkeypatch.setenv("SSEARCH_THREADS", "3")
    assert cli.threads_from(None) == 3
    assert cli.threads_from(2) == 2
    monkeypatch.setenv("SSEARCH_THREADS", "many")
    with pytest.raises(InputError):
        cli.threads_from(None)
    monkeypatch.delenv("SSEARCH_THREADS")
    assert cli.threads_from(None) >= 1
