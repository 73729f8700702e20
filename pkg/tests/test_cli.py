import csv
import json
import subprocess
import sys

import pytest

from fdcov.cli import main, parse_k_range
from fdcov.data import write_csv
from fdcov.errors import InputError
from fdcov.numerics import RngStream
from fdcov.simulation import ScenarioSpec, SimulationDesign, generate_pair


@pytest.fixture
def dataset(tmp_path):
    x, y = generate_pair(SimulationDesign(n=24, m=20, N=6, M=6), ScenarioSpec("I", 0.0), RngStream(8))
    path = tmp_path / "data.csv"
    write_csv(path, x, y)
    return path


@pytest.mark.parametrize("text, ks", [("1:4", [1, 2, 3, 4]), ("1,3", [1, 3]), ("5", [5])])
def test_parse_k_range(text, ks):
    assert parse_k_range(text) == ks


@pytest.mark.parametrize("text", ["0:2", "a", ""])
def test_parse_k_range_invalid(text):
    with pytest.raises(InputError):
        parse_k_range(text)


def test_test_command_json(dataset, tmp_path):
    out = tmp_path / "r.json"
    assert main(["test", "--csv", str(dataset), "--K", "1:3", "--seed", "42", "--out", str(out)]) == 0
    payload = json.loads(out.read_text())
    assert len(payload["results"]) == 9
    rec = payload["results"][0]
    assert set(rec) == {"statistic", "K", "df", "p_value", "split_id", "flags", "bandwidth_x", "bandwidth_y",
                        "grid_size", "seed"}
    assert all(r["df"] == r["K"] * (r["K"] + 1) // 2 for r in payload["results"])
    meta = payload["metadata"]
    assert meta["K"] == "1:3" and meta["seed"] == 42 and meta["rng_algorithm"] == "numpy-PCG64"
    assert meta["groups"] == {"x": 24, "y": 20} and meta["time_rescaled"] is False


def test_test_command_deterministic(dataset, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for path in (a, b):
        main(["test", "--csv", str(dataset), "--K", "2", "--out", str(path)])
    ra = json.loads(a.read_text())["results"]
    assert ra == json.loads(b.read_text())["results"]


def test_test_command_diagnostics(dataset, tmp_path):
    diag = tmp_path / "diag"
    main(["test", "--csv", str(dataset), "--K", "2", "--diagnostics", str(diag), "--out", str(tmp_path / "r.json")])
    names = sorted(p.name for p in diag.iterdir())
    assert names == sorted(f"{kind}_{d}.csv" for kind in ("surface", "eigen", "moments")
                           for d in ("Z_eval", "Z_prime_eval"))


def test_dropped_subjects_warning(dataset, tmp_path, capsys):
    with open(dataset, "a") as fh:
        fh.write("lonely,0.5,1.0,x\n")
    assert main(["test", "--csv", str(dataset), "--K", "1", "--out", str(tmp_path / "r.json")]) == 0
    assert "dropped_subjects=1" in capsys.readouterr().err


def test_simulate_writes_table_and_metadata(tmp_path):
    out = tmp_path / "curve.csv"
    code = main(["simulate", "--scenario", "I", "--a", "0,0.6", "--n", "16", "--m", "16", "--N", "5",
                 "--K", "1:2", "--reps", "3", "--seed", "42", "--out", str(out)])
    assert code == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 * 2 * 4
    assert {"scenario", "a", "n", "m", "N", "M", "K", "split_reading", "rate", "mc_se", "reps", "failures"} <= set(rows[0])
    meta = json.loads((tmp_path / "curve.csv.meta.json").read_text())
    assert meta["reps"] == 3 and meta["a"] == "0,0.6" and meta["command"] == "simulate"


def test_simulate_custom_needs_gamma():
    assert main(["simulate", "--scenario", "custom", "--reps", "1"]) == 2


@pytest.mark.parametrize("cmd", ["permute", "bootstrap"])
def test_resampling_commands(cmd, dataset, tmp_path):
    out = tmp_path / f"{cmd}.csv"
    assert main([cmd, "--csv", str(dataset), "--reps", "2", "--K", "1", "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert {r["study"] for r in rows} == {cmd}


def test_exit_code_missing_file(tmp_path):
    assert main(["test", "--csv", str(tmp_path / "nope.csv")]) == 2


def test_exit_code_schema(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("subject_id,time,group\n")
    assert main(["test", "--csv", str(path)]) == 2


def test_exit_code_numerical(dataset, tmp_path):
    assert main(["test", "--csv", str(dataset), "--K", "1", "--bandwidth-x", "1e-6",
                 "--out", str(tmp_path / "r.json")]) == 3


def test_console_entry_point(dataset):
    proc = subprocess.run([sys.executable, "-m", "fdcov.cli", "test", "--csv", str(dataset), "--K", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"][0]["K"] == 1
