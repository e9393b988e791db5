import csv
import subprocess
import sys

import pytest

from sensorcode.cli import main

FIELD_TOML = """
[scenario]
kind = "field"
n = 8
beta = 1.0

[coding]
rate = 1
mode = "ir"
resolution = 4
S = 3

[simulation]
pmf_samples = 20000
eval_samples = 1000
seed = 3
"""


@pytest.fixture
def field_cfg(tmp_path):
    p = tmp_path / "field.toml"
    p.write_text(FIELD_TOML)
    return p


def test_design_simulate_inspect(field_cfg, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["design", "--config", str(field_cfg), "--out", str(out)]) == 0
    assert (out / "design.json").exists()
    assert (out / "dendrogram.dot").read_text().startswith("digraph")
    assert (out / "factorgraph.dot").read_text().startswith("graph")
    capsys.readouterr()

    assert main(["simulate", "--artifact", str(out / "design.json"), "--format", "csv", "--out", str(out)]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["mode", "R", "L", "SNR_dB", "seed", "n_vectors"]
    assert rows[1][0] == "ir" and rows[1][2] == "4" and rows[1][5] == "1000"
    assert (out / "report.csv").read_text().splitlines()[1] == ",".join(rows[1])

    for what in ("dendrogram", "factorgraph", "mappings", "summary"):
        assert main(["inspect", "--artifact", str(out / "design.json"), what]) == 0
    assert "encoder" in capsys.readouterr().out


def test_deterministic_output(field_cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["design", "--config", str(field_cfg), "--out", str(d)]) == 0
        assert main(["simulate", "--artifact", str(d / "design.json"), "--out", str(d), "--format", "csv"]) == 0
    assert (a / "design.json").read_bytes() == (b / "design.json").read_bytes()
    assert (a / "report.csv").read_bytes() == (b / "report.csv").read_bytes()


def test_zero_samples(field_cfg, tmp_path, capsys):
    out = tmp_path / "z"
    main(["design", "--config", str(field_cfg), "--out", str(out)])
    capsys.readouterr()
    assert main(["simulate", "--artifact", str(out / "design.json"), "--samples", "0", "--format", "csv"]) == 0
    assert capsys.readouterr().out.strip() == "mode,R,L,SNR_dB,seed,n_vectors"


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[scenario]\nkind = 'nope'\n")
    assert main(["design", "--config", str(bad)]) == 2
    assert main(["design", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["simulate", "--artifact", str(tmp_path / "missing.json")]) == 2
    junk = tmp_path / "junk.json"
    junk.write_text("{not json")
    assert main(["inspect", "--artifact", str(junk), "summary"]) == 2
    assert main(["simulate", "--artifact", str(junk), "--threads", "0"]) == 2
    assert "error" in capsys.readouterr().err


def test_capacity_error_exits_3(tmp_path):
    p = tmp_path / "big.toml"
    p.write_text("kind = 'field'\nn = 6\nS = 6\nmode = 'ir'\nresolution = 16\nmax_cells = 1000\n"
                 "pmf_samples = 100\n")
    assert main(["design", "--config", str(p), "--out", str(tmp_path / "o")]) == 3


def test_ceo_has_no_dendrogram(tmp_path):
    p = tmp_path / "ceo.toml"
    p.write_text("kind = 'ceo'\nn = 4\nhub_levels = 8\npmf_samples = 5000\n")
    out = tmp_path / "c"
    assert main(["design", "--config", str(p), "--out", str(out)]) == 0
    assert main(["inspect", "--artifact", str(out / "design.json"), "dendrogram"]) == 2


def test_reproduce_tables_small(capsys):
    assert main(["reproduce-tables", "table2", "--n", "4", "--samples", "200", "--pmf-samples", "2000",
                 "--format", "csv"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "lambda_sq,mode,R,L,SNR_dB,seed"
    assert any(",N.A.," in l for l in lines)


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "sensorcode", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "0.1.0" in r.stdout
