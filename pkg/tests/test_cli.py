import csv
import json

import pytest

from maisac import cli


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("tx_power_dbm: 30\nengine:\n  max_outer: 3\n")
    return path


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_run_writes_csv(config, tmp_path):
    out = tmp_path / "run.csv"
    assert cli.main(["run", "--config", str(config), "--seed", "1", "--out", str(out)]) == 0
    rows = read_rows(out)
    assert tuple(rows[0]) == cli.RUN_COLUMNS
    assert 1 <= len(rows) - 1 <= 3
    first = dict(zip(rows[0], rows[1]))
    assert first["iter"] == "1" and first["ms"] == ""
    assert float(first["sum_rate_bits"]) == pytest.approx(float(first["sum_rate_nats"]) / 0.6931471805599453)


def test_run_timing_fills_ms(config, tmp_path):
    out = tmp_path / "run.csv"
    assert cli.main(["run", "--config", str(config), "--seed", "1", "--out", str(out), "--timing"]) == 0
    assert float(read_rows(out)[1][-1]) > 0


def test_run_is_byte_identical(config, tmp_path):
    outs = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in outs:
        cli.main(["run", "--config", str(config), "--seed", "9", "--out", str(out)])
    assert outs[0].read_bytes() == outs[1].read_bytes()


@pytest.mark.parametrize("text", ["n_tx: 4\n", "engine: 3\n", "engine:\n  scheme: nope\n", "- 1\n", "a: [\n"])
def test_bad_config_is_usage_error(text, tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(text)
    code = cli.main(["run", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path / "o.csv")])
    assert code == cli.EXIT_USAGE
    assert "error" in capsys.readouterr().err


def test_missing_arguments_are_usage_errors(capsys):
    assert cli.main(["run", "--seed", "0"]) == cli.EXIT_USAGE
    assert cli.main(["run", "--config", "x", "--seed", "-1", "--out", "y"]) == cli.EXIT_USAGE
    assert cli.main([]) == cli.EXIT_USAGE


def test_missing_config_file(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.yaml"), "--seed", "0",
                     "--out", str(tmp_path / "o.csv")]) == cli.EXIT_USAGE


def test_infeasible_is_runtime_error(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("gamma_r_db: 60\n")
    assert cli.main(["run", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path / "o.csv")]) == cli.EXIT_RUNTIME


def test_unwritable_output(config, tmp_path):
    out = tmp_path / "missing" / "dir" / "o.csv"
    assert cli.main(["run", "--config", str(config), "--seed", "0", "--out", str(out)]) == cli.EXIT_RUNTIME


def test_sweep_outputs(tmp_path):
    spec = tmp_path / "sweep.yaml"
    spec.write_text("axis: tx_power_dbm\nvalues: [20, 30]\ntrials: 2\nschemes: [fpa, rand-ma]\n"
                    "seed: 4\nbase:\n  engine:\n    max_outer: 2\n")
    out = tmp_path / "out"
    assert cli.main(["sweep", "--spec", str(spec), "--out-dir", str(out)]) == 0
    summary = read_rows(out / "summary.csv")
    assert tuple(summary[0]) == cli.SUMMARY_COLUMNS
    assert len(summary) == 5
    cell = read_rows(out / "tx_power_dbm=20__fpa.csv")
    assert tuple(cell[0]) == cli.TRIAL_COLUMNS
    assert [r[0] for r in cell[1:]] == ["4", "5"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["cells"]) == 4
    assert manifest["cells"][0]["engine"]["max_outer"] == 2


def test_sweep_parallel_matches_serial(tmp_path):
    spec = tmp_path / "sweep.yaml"
    spec.write_text("axis: n_t\nvalues: [2]\ntrials: 2\nschemes: [fpa]\nbase:\n  engine:\n    max_outer: 2\n")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["sweep", "--spec", str(spec), "--out-dir", str(a)]) == 0
    assert cli.main(["sweep", "--spec", str(spec), "--out-dir", str(b), "--jobs", "2"]) == 0
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()


@pytest.mark.parametrize("text", ["axis: foo\nvalues: [1]\n", "axis: n_t\nvalues: []\n",
                                  "axis: n_t\nvalues: [1]\ntrials: 0\n", "axis: n_t\nvalues: [1]\nextra: 1\n",
                                  "axis: n_t\nvalues: [0]\n"])
def test_bad_sweep_spec(text, tmp_path):
    spec = tmp_path / "s.yaml"
    spec.write_text(text)
    assert cli.main(["sweep", "--spec", str(spec), "--out-dir", str(tmp_path / "o")]) == cli.EXIT_USAGE


def test_summary_statistics():
    mean, se = cli.summarize([1.0, 3.0, float("nan")])
    assert mean == 2.0 and se == pytest.approx(1.0)


def test_single_trial_sweep_matches_run(tmp_path):
    spec = tmp_path / "sweep.yaml"
    spec.write_text("axis: tx_power_dbm\nvalues: [25]\ntrials: 1\nseed: 3\nbase:\n  engine:\n    max_outer: 3\n")
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("tx_power_dbm: 25\nengine:\n  max_outer: 3\n")
    assert cli.main(["sweep", "--spec", str(spec), "--out-dir", str(tmp_path / "o")]) == 0
    assert cli.main(["run", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "r.csv")]) == 0
    cell = read_rows(tmp_path / "o" / "tx_power_dbm=25__joint-ma.csv")
    run = read_rows(tmp_path / "r.csv")
    assert cell[1][3] == run[-1][1]
