import csv
import json
import math
import subprocess
import sys

import pytest

from selfnorm import cli


def run(tmp_path, command, cfg, *extra, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    out = tmp_path / "out"
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    return code, out


def read(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# selfnorm ")
    rows = list(csv.reader(lines[1:]))
    return rows[0], rows[1:]


RATIO = {"seed": 11, "process": {"family": "iid_normal"}, "n": 40, "reps": 3000,
         "xs": [0.5, 1.0, 1.5, 2.0], "statistic": {"name": "self_normalized"}, "plot": False}


def test_ratio_rows_and_header(tmp_path):
    code, out = run(tmp_path, "ratio", RATIO)
    assert code == 0
    header, rows = read(out / "ratio.csv")
    assert header == cli.RATIO_HEADER
    assert len(rows) == 4
    for r in rows:
        # symmetric law: both ratios coincide
        assert r[7] == r[8]
    assert (out / "ratio.csv").read_bytes().count(b"\r\n") == 6


def test_ratio_deterministic_across_workers(tmp_path):
    cfg = dict(RATIO, process={"family": "iid_centered_exp"}, batch_size=500)
    _, out = run(tmp_path, "ratio", cfg, "--workers", "1")
    first = (out / "ratio.csv").read_bytes()
    _, out = run(tmp_path, "ratio", cfg, "--workers", "3")
    assert (out / "ratio.csv").read_bytes() == first
    header, rows = read(out / "ratio.csv")
    assert any(r[7] != r[8] for r in rows)


def test_ratio_plot_written(tmp_path):
    code, out = run(tmp_path, "ratio", dict(RATIO, plot=True))
    assert code == 0
    svg = (out / "ratio.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg


def test_seed_override_and_env(tmp_path, monkeypatch):
    _, out = run(tmp_path, "ratio", RATIO, "--seed", "12")
    meta = (out / "ratio.csv").read_text().splitlines()[0]
    assert meta.endswith("seed=12")
    monkeypatch.setenv("SELFNORM_SEED", "13")
    _, out = run(tmp_path, "ratio", RATIO)
    assert (out / "ratio.csv").read_text().splitlines()[0].endswith("seed=13")


def test_config_errors(tmp_path):
    bad = dict(RATIO)
    bad.pop("seed")
    assert run(tmp_path, "ratio", bad)[0] == 2
    assert run(tmp_path, "ratio", dict(RATIO, colour="red"))[0] == 2
    assert run(tmp_path, "ratio", dict(RATIO, process={"family": "ar1", "a": 2.0}))[0] == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert cli.main(["ratio", "--config", str(tmp_path / "broken.json")]) == 2
    assert cli.main(["ratio", "--config", str(tmp_path / "missing.json")]) == 3


def test_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(RATIO))
    assert cli.main(["ratio", "--config", str(path), "--out", str(blocker / "sub")]) == 3


BLOCKS = {"seed": 3, "process": {"family": "ma1", "theta": 0.5}, "n": 400, "reps": 1000,
          "xs": [1.0, 2.0], "scheme": "one_dep", "plot": False}


def test_blocks(tmp_path, capsys):
    code, out = run(tmp_path, "blocks", BLOCKS)
    assert code == 0
    assert "block_len=20 k=19 rho=0.4" in capsys.readouterr().out
    header, rows = read(out / "blocks.csv")
    assert header == cli.RATIO_HEADER and len(rows) == 2
    assert float(rows[1][6]) == pytest.approx(0.5 * math.erfc(2 / math.sqrt(1.8) / math.sqrt(2)), rel=1e-14)
    first = (out / "blocks.csv").read_bytes()
    run(tmp_path, "blocks", BLOCKS, "--workers", "2")
    assert (out / "blocks.csv").read_bytes() == first
    code, out = run(tmp_path, "blocks", dict(BLOCKS, process={"family": "ar1", "a": 0.5},
                                               scheme="mixing", tau_mix=1.0))
    assert code == 0
    assert "alpha=0.333333 block_len=8" in capsys.readouterr().out


COVERAGE = {"seed": 5, "process": {"family": "iid_normal"}, "p": 4, "n": 100, "reps": 500, "alpha": 0.1}


def test_coverage(tmp_path):
    code, out = run(tmp_path, "coverage", COVERAGE)
    assert code == 0
    header, rows = read(out / "coverage.csv")
    assert header[:4] == ["coverage_rate", "wilson_lo", "wilson_hi", "t0"]
    assert 0 <= float(rows[0][0]) <= 1
    header, rows = read(out / "coverage_misses.csv")
    assert len(rows) == 4
    first = (out / "coverage.csv").read_bytes()
    run(tmp_path, "coverage", COVERAGE, "--workers", "2")
    assert (out / "coverage.csv").read_bytes() == first


def test_coverage_with_data(tmp_path):
    data = tmp_path / "m.csv"
    data.write_text("# two coordinates\n1,2,3,4,5\n-1,0.5,0,2,1\n")
    code, out = run(tmp_path, "coverage", {"seed": 1, "alpha": 0.1, "tau": 10}, "--data", str(data))
    assert code == 0
    header, rows = read(out / "intervals.csv")
    assert len(rows) == 2
    assert float(rows[0][1]) < 3 < float(rows[0][2])


ORACLE = {"seed": 9, "atoms": [-1, 1], "probs": [0.5, 0.5], "ns": [4], "xs": [0.5, 1.0, 1.5],
          "reps": 100_000}


def test_oracle(tmp_path):
    code, out = run(tmp_path, "oracle", ORACLE)
    assert code == 0
    header, rows = read(out / "oracle.csv")
    assert len(rows) == 3
    assert float(rows[1][3]) == 0.0625
    assert all(r[-1] == "true" for r in rows)


def test_oracle_gate_failure_exit(tmp_path, monkeypatch):
    # a wrong "exact" value must trip the gate
    monkeypatch.setattr(cli, "enumerate_exact", lambda *a, **k: [0.9, 0.9, 0.9])
    code, out = run(tmp_path, "oracle", ORACLE)
    assert code == 1
    header, rows = read(out / "oracle.csv")
    assert all(r[-1] == "false" for r in rows)


ESTIMATORS = {"seed": 2, "process": {"family": "iid_normal"}, "n": 50, "reps": 200, "tau": None}


def test_estimators(tmp_path):
    code, out = run(tmp_path, "estimators", ESTIMATORS)
    assert code == 0
    header, rows = read(out / "estimators.csv")
    assert header == ["rep", "mean", "winsorized", "trimmed", "huber"]
    assert len(rows) == 200
    for r in rows:
        vals = [float(v) for v in r[1:]]
        assert max(vals) - min(vals) <= 1e-10
    header, rows = read(out / "estimators_summary.csv")
    assert all(float(r[1]) >= 0 for r in rows)
    first = (out / "estimators.csv").read_bytes()
    run(tmp_path, "estimators", ESTIMATORS)
    assert (out / "estimators.csv").read_bytes() == first


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "selfnorm", "ratio", "--config", "x", "--print-schema"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["required"][0] == "seed"
