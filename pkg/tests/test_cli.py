import json
import subprocess
import sys

import numpy as np
import pytest

from dudley import cli
from dudley.io import read_csv


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("DUDLEY_OUTDIR", str(tmp_path))
    monkeypatch.delenv("DUDLEY_THREADS", raising=False)
    return tmp_path


def test_simulate_is_byte_deterministic(outdir):
    args = ["simulate", "--paths", "4", "--T", "0.2", "--h", "0.01", "--s", "2"]
    assert cli.run(args + ["--out", "a.csv"]) == 0
    assert cli.run(args + ["--out", "b.csv"]) == 0
    a, b = (outdir / "a.csv").read_bytes(), (outdir / "b.csv").read_bytes()
    assert a == b
    assert (outdir / "a_paths.png").read_bytes() == (outdir / "b_paths.png").read_bytes()
    assert b"\r\n" in a


def test_csv_carries_seed_and_digest(outdir, capsys):
    assert cli.run(["tangent", "--paths", "3", "--T", "0.1", "--h", "0.01", "--seed", "7",
                    "--no-plot"]) == 0
    digest = capsys.readouterr().out.split("digest=")[1].split()[0]
    header, rows = read_csv(outdir / "tangent.csv")
    assert header[:2] == ["seed", "config_digest"]
    assert all(r[0] == "7" and r[1] == digest for r in rows)
    assert not list(outdir.glob("*.png"))


def test_digest_ignores_presentation(outdir, capsys):
    cli.run(["bch-check", "--pairs", "5", "--no-plot"])
    cli.run(["bch-check", "--pairs", "5", "--format", "csv", "--out", "x.csv"])
    out = capsys.readouterr().out.splitlines()
    digests = [line.split("digest=")[1].split()[0] for line in out]
    assert digests[0] == digests[1]


def test_json_key_order_stable(outdir):
    assert cli.run(["bch-check", "--pairs", "5", "--no-plot"]) == 0
    text = (outdir / "bch-check.json").read_text()
    doc = json.loads(text)
    assert list(doc) == sorted(doc)
    assert json.dumps(doc, sort_keys=True, indent=2) + "\n" == text
    assert doc["seed"] == 0 and len(doc["config_digest"]) == 16


def test_exit_codes(outdir, tmp_path):
    assert cli.run(["simulate", "--d", "9"]) == 2
    assert cli.run(["simulate", "--bogus", "1"]) == 2
    assert cli.run(["nosuch"]) == 2
    assert cli.run(["simulate", "--paths", "2", "--T", "5", "--h", "0.01", "--sigma", "1000",
                    "--R", "50", "--no-plot"]) == 3


def test_config_file_and_flag_precedence(outdir, tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[common]\nseed = 3\n\n[bch-check]\npairs = 4\n")
    assert cli.run(["bch-check", "--config", str(cfg), "--no-plot"]) == 0
    doc = json.loads((outdir / "bch-check.json").read_text())
    assert doc["seed"] == 3 and doc["config"]["pairs"] == 4
    assert cli.run(["bch-check", "--config", str(cfg), "--pairs", "6", "--no-plot"]) == 0
    doc = json.loads((outdir / "bch-check.json").read_text())
    assert doc["config"]["pairs"] == 6


def test_unknown_config_key_names_line(outdir, tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[common]\nseed = 1\n\n[simulate]\npaths = 2\nfooo = 3\n")
    assert cli.run(["simulate", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:6:" in err and "fooo" in err


def test_empty_config_is_valid(outdir, tmp_path):
    cfg = tmp_path / "empty.ini"
    cfg.write_text("")
    assert cli.run(["tangent", "--config", str(cfg), "--paths", "2", "--T", "0.05",
                    "--h", "0.01", "--no-plot"]) == 0


def test_green_and_wiener_commands(outdir):
    assert cli.run(["green", "--paths", "200", "--no-plot"]) == 0
    header, rows = read_csv(outdir / "green.csv")
    assert "G" in header and "tangent_G" in header and len(rows) == 1
    assert cli.run(["wiener", "--paths", "20", "--slices", "0:1", "--cells", "3",
                    "--max-sources", "2", "--no-plot"]) == 0
    doc = json.loads((outdir / "wiener.json").read_text())
    assert doc["result"]["weight"] == "classical"


def test_selftest_subset(outdir):
    assert cli.run(["selftest", "--suites", "algebra", "--no-plot"]) == 0


def test_console_entry_point(outdir):
    r = subprocess.run([sys.executable, "-m", "dudley", "--version"], capture_output=True,
                       text=True)
    assert r.returncode == 0 and r.stdout.startswith("dudley ")
