import csv
import io
import json
import subprocess
import sys

import pytest

from donsker_lab.cli import EXIT_BAD_CONFIG, build_parser, main, resolve_config


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


def test_gram_example(capsys):
    code, out = run(["gram", "--m", "24", "--N", "2"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out.out)))
    gamma = {(int(r["i"]), int(r["j"])): float(r["value"]) for r in rows if r["quantity"] == "gamma"}
    assert gamma == {(0, 0): 1.0, (0, 1): 0.0, (1, 0): 0.0, (1, 1): 1.0}
    inv = [r for r in rows if r["quantity"] == "inv_inf_norm"][0]
    assert float(inv["value"]) <= 2 and inv["ok"] == "1"
    assert all(r["seed"] == "0" for r in rows)


def test_gram_off_grid_json(capsys, tmp_path):
    out = tmp_path / "g.json"
    code, _ = run(["gram", "--m", "17", "--N", "2", "--format", "json", "--out", str(out), "--seed", "5"], capsys)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["command"] == "gram" and doc["params"]["seed"] == 5
    assert "threads" not in doc["params"]
    assert all(row[-1] == 5 for row in doc["rows"])


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"reps": 500, "seed": 3, "ladder": "16,64,256"}))
    args = build_parser().parse_args(["localtime", "--config", str(cfg), "--seed", "9"])
    got = resolve_config(args)
    assert (got["reps"], got["seed"], got["ladder"]) == (500, 9, [16, 64, 256])
    assert got["law"] == "rademacher"


@pytest.mark.parametrize(
    "argv",
    [
        ["gram", "--m", "4", "--N", "4"],
        ["norms", "--eta", "0.6", "--p", "10"],
        ["rate", "--ladder", "64,512"],
        ["localtime", "--law", "cauchy"],
        ["stein", "--reps", "1001"],
        ["stein", "--suite", "probe", "--pairs", "4:32"],
        ["rate", "--fine-factor", "8"],
    ],
)
def test_invalid_config_exits_2(argv, capsys):
    code, out = run(argv, capsys)
    assert code == EXIT_BAD_CONFIG
    assert "invalid configuration" in out.err


def test_unknown_config_field(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    code, out = run(["gram", "--config", str(cfg)], capsys)
    assert code == EXIT_BAD_CONFIG and "bogus" in out.err


def test_localtime_small(capsys):
    code, out = run(["localtime", "--ladder", "4,16,64", "--reps", "2000"], capsys)
    rows = list(csv.reader(io.StringIO(out.out)))
    assert rows[0] == ["m", "W1", "se", "envelope", "mean", "mean_se", "ok", "seed"]
    assert [r[0] for r in rows[1:4]] == ["4", "16", "64"]


def test_module_entry_point(tmp_path):
    out = tmp_path / "g.csv"
    subprocess.run([sys.executable, "-m", "donsker_lab", "gram", "--m", "9", "--N", "2", "--out", str(out)], check=True)
    assert out.read_text().startswith("m,N,quantity")
