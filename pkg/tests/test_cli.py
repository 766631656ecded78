import csv

import numpy as np
import pytest

from nbmkl import cli

SMALL = """\
[synth]
seed = 4
tasks = 2
n = 30
p = 3

[kernels]
polynomial_degree = 0
gaussian_spreads = 2,8

[train]
eta = 16
beta = 1
max_outer = 8
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text(SMALL)
    return str(p)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_parse_grid():
    assert cli.parse_grid("pow2:-1:1") == [0.5, 1.0, 2.0]
    assert cli.parse_grid("1, 3") == [1.0, 3.0]
    assert cli.parse_grid("") == []
    with pytest.raises(cli.ConfigError):
        cli.parse_grid("pow2:a")


def test_missing_manifest_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[data]\nmanifest = nowhere.txt\n")
    assert run("train", "--config", p, "--out", tmp_path / "o") == 2
    assert "does not exist" in capsys.readouterr().err


def test_config_errors_exit_2(cfg, tmp_path):
    out = tmp_path / "o"
    assert run("train", "--config", cfg, "--out", out, "--train.nope", "1") == 2
    assert run("train", "--config", cfg, "--out", out, "--train.eta=4", "--train.beta=1") == 2
    assert run("train", "--config", tmp_path / "absent.ini", "--out", out) == 2
    assert run("train", "--config", cfg) == 2
    assert run("report", "--out", out) == 2


def test_runtime_failure_exits_3(tmp_path):
    d = tmp_path / "d"
    d.mkdir()
    (d / "t.csv").write_text("1,0.5\n1,0.2\n1,0.3\n1,0.1\n1,0.4\n")
    (d / "manifest.txt").write_text("t.csv\n")
    p = tmp_path / "c.ini"
    p.write_text(f"[data]\nmanifest = {d / 'manifest.txt'}\n[split]\nstratified = false\n")
    assert run("train", "--config", p, "--out", tmp_path / "o") == 3


def test_train_artifacts(cfg, tmp_path):
    out = tmp_path / "o"
    assert run("train", "--config", cfg, "--out", out, "--repeats", 2, "--workers", 1) == 0
    trace = rows(out / "trace.csv")
    assert list(trace[0]) == list(cli.TRACE_COLUMNS)
    for r in ("0", "1"):
        vals = [float(x["objective"]) for x in trace if x["repeat"] == r]
        assert all(b <= a + 1e-8 * abs(a) for a, b in zip(vals, vals[1:]))
    assert (out / "model_r0.nbm").is_file() and (out / "model_r1.nbm").is_file()
    metrics = rows(out / "metrics.csv")
    assert {m["split"] for m in metrics} == {"validation", "test"}
    summ = rows(out / "summary.csv")
    assert [s["split"] for s in summ] == ["validation", "test"] and summ[0]["repeats"] == "2"


def test_avmtmkl_single_trace_entry(cfg, tmp_path):
    out = tmp_path / "o"
    assert run("train", "--config", cfg, "--out", out, "--method", "AVMTMKL") == 0
    assert len(rows(out / "trace.csv")) == 1


def test_reruns_are_byte_identical(cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("train", "--config", cfg, "--out", a, "--repeats", 2, "--workers", 1) == 0
    assert run("train", "--config", cfg, "--out", b, "--repeats", 2, "--workers", 2) == 0
    for name in ("trace.csv", "metrics.csv", "summary.csv", "model_r1.nbm"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_default_grid_sizes(cfg):
    c = cli.read_config(cfg)
    assert len(c.grids["C"]) == 27 and len(c.grids["eta"]) == 41 and len(c.grids["beta"]) == 41
    grid = cli.tuning_grid(c, "MT-ONMKL", "classification")
    assert all(hp.eta > 4 * hp.beta for hp in grid)
    assert len(cli.tuning_grid(c, "ITL", "classification")) == 27


def test_empty_grid(cfg):
    c = cli.read_config(cfg, [("tune.eta", "1"), ("tune.beta", "1")])
    with pytest.raises(cli.ConfigError, match="empty"):
        cli.tuning_grid(c, "MT-ONMKL", "classification")


def test_select_rule():
    g = ["small", "large"]
    assert cli._select("classification", g, [0.8, 0.8]) == "small"
    assert cli._select("classification", g, [0.7, 0.8]) == "large"
    assert cli._select("regression", g, [0.7, 0.8]) == "small"


def test_tune_singleton(cfg, tmp_path):
    out = tmp_path / "o"
    assert run("tune", "--config", cfg, "--out", out, "--tune.C", "2", "--tune.eta", "32",
               "--tune.beta", "2") == 0
    best = rows(out / "best.csv")
    assert len(rows(out / "grid.csv")) == 1
    assert float(best[0]["C"]) == 2.0 and float(best[0]["eta"]) == 32.0


def test_tune_picks_dominant_point(cfg, tmp_path):
    out = tmp_path / "o"
    assert run("tune", "--config", cfg, "--out", out, "--method", "AVMTMKL",
               "--tune.C", "1e-6,1") == 0
    grid = rows(out / "grid.csv")
    scores = {float(g["C"]): float(g["validation"]) for g in grid}
    best = float(rows(out / "best.csv")[0]["C"])
    assert scores[best] == max(scores.values())
    if scores[1.0] > scores[1e-6]:
        assert best == 1.0


def test_report_mtonmkl_and_kta(cfg, tmp_path):
    for method in ("MT-ONMKL", "KTA"):
        out = tmp_path / method
        assert run("train", "--config", cfg, "--out", out, "--method", method) == 0
        assert run("report", "--model", out / "model_r0.nbm", "--out", out) == 0
        rep = {r["quantity"]: r["value"] for r in rows(out / "report.csv")}
        assert float(rep["bound"]) > 0 and rep["alignment"] == "available"
        M = np.loadtxt(out / "alignment.csv", delimiter=",", skiprows=1, ndmin=2)
        assert M.shape == (2, 2)
        assert np.all(np.abs(M[~np.isnan(M)]) <= 1.0)


def test_report_baseline_unavailable(cfg, tmp_path, capsys):
    out = tmp_path / "o"
    assert run("train", "--config", cfg, "--out", out, "--method", "ITL") == 0
    assert run("report", "--model", out / "model_r0.nbm", "--out", out) == 0
    assert "unavailable" in capsys.readouterr().out
    assert not (out / "alignment.csv").exists()


def test_synth_then_load(cfg, tmp_path):
    out = tmp_path / "s"
    assert run("synth", "--config", cfg, "--out", out) == 0
    p = tmp_path / "m.ini"
    p.write_text(f"[data]\nmanifest = {out / 'manifest.txt'}\n[kernels]\ngaussian_spreads = 2\n")
    assert run("build-bank", "--config", p, "--out", out) == 0
    assert (out / "bank.nbkb").read_bytes()[:4] == b"NBKB"
