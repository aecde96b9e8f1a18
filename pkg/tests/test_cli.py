import json
import re

import numpy as np
import pytest

from pmaxtest import Dataset, save_csv
from pmaxtest.cli import EXIT_DEGENERATE, EXIT_INVALID, EXIT_OK, main


@pytest.fixture
def h0_csv(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.standard_normal(80), np.ones((80, 1)), rng.standard_normal((80, 12)),
                 ("const",), tuple(f"x{j}" for j in range(12)))
    save_csv(ds, tmp_path / "h0.csv")
    return tmp_path / "h0.csv"


def _strip_timing(text):
    return "\n".join(ln for ln in text.splitlines() if not ln.startswith("elapsed_s"))


def test_test_command(h0_csv, tmp_path, capsys):
    out_json = tmp_path / "r.json"
    rc = main(["test", "--data", str(h0_csv), "--response", "y", "--nuisance", "const",
               "--test-all-remaining", "--replicates", "200", "--threads", "1", "--output", str(out_json)])
    assert rc == EXIT_OK
    text = capsys.readouterr().out
    assert re.search(r"^p_value\s+: \d\.\d{4}$", text, re.M)
    assert re.search(r"^argmax\s+: x\d+", text, re.M)
    report = json.loads(out_json.read_text())
    for key in ("statistic", "p_value", "argmax", "weights", "replicates", "seed", "elapsed_s"):
        assert key in report
    assert report["replicates"] == 200 and report["weights"] == "invse"


def test_same_seed_same_stdout(h0_csv, capsys):
    args = ["test", "--data", str(h0_csv), "--response", "y", "--test", "x1,x2,x3",
            "--replicates", "150", "--seed", "4", "--mode", "multiplier"]
    main(args + ["--threads", "1"])
    first = capsys.readouterr().out
    main(args + ["--threads", "4"])
    assert _strip_timing(capsys.readouterr().out) == _strip_timing(first)


def test_collinear_column_exit_3(tmp_path, capsys):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((30, 3))
    x[:, 2] = 2.0  # constant column, collinear with the nuisance intercept
    ds = Dataset(rng.standard_normal(30), np.ones((30, 1)), x, ("one",), ("a", "b", "flat_col"))
    save_csv(ds, tmp_path / "c.csv")
    rc = main(["test", "--data", str(tmp_path / "c.csv"), "--response", "y", "--nuisance", "one",
               "--test-all-remaining", "--replicates", "10"])
    assert rc == EXIT_DEGENERATE
    assert "flat_col" in capsys.readouterr().err


def test_bad_cell_exit_2(tmp_path, capsys):
    (tmp_path / "b.csv").write_text("y,a\n1,2\n2,nan\n3,1\n")
    rc = main(["test", "--data", str(tmp_path / "b.csv"), "--response", "y", "--test", "a"])
    assert rc == EXIT_INVALID
    assert "row 2" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["test", "--data", "x.csv", "--response", "y"],
    ["test", "--data", "x.csv", "--response", "y", "--test", "a", "--weights", "huge"],
    ["simulate", "--preset", "desk-scale", "--alpha", "0.05,2"],
    ["bogus"],
])
def test_bad_flags_exit_2(argv, capsys):
    assert main(argv) == EXIT_INVALID


def test_missing_file_exit_2(tmp_path):
    assert main(["test", "--data", str(tmp_path / "none.csv"), "--response", "y", "--test", "a"]) == EXIT_INVALID


def test_unknown_preset(capsys):
    assert main(["simulate", "--preset", "paper-h9"]) == EXIT_INVALID
    assert "preset" in capsys.readouterr().err


def test_malformed_design_names_key(tmp_path, capsys):
    f = tmp_path / "d.json"
    f.write_text(json.dumps({"n_list": [100], "alpha_list": [0.5, 7]}))
    assert main(["simulate", "--design", str(f)]) == EXIT_INVALID
    assert "alpha_list[1]" in capsys.readouterr().err
    f.write_text("{not json")
    assert main(["simulate", "--design", str(f)]) == EXIT_INVALID


def test_simulate_preset_writes_tables(tmp_path, capsys):
    rc = main(["simulate", "--preset", "desk-scale", "--mc-samples", "4", "--replicates", "30",
               "--threads", "1", "--output", str(tmp_path)])
    assert rc == EXIT_OK
    out = capsys.readouterr().out
    assert "p-Max-t-Test" in out
    assert (tmp_path / "tables.txt").exists() and (tmp_path / "rejections.csv").exists()


def test_simulate_design_file(tmp_path, capsys):
    f = tmp_path / "d.json"
    f.write_text(json.dumps({"n_list": [50], "k_theta": [5], "tests": ["pmaxt"], "mc_samples": 3,
                             "replicates": 20, "seed": 1}))
    assert main(["simulate", "--design", str(f), "--threads", "1"]) == EXIT_OK
    assert "k_theta=5" in capsys.readouterr().out


@pytest.mark.parametrize("n,k1,k2", [(100, 482, 200), (250, 1144, 1250), (500, 2381, 5000)])
def test_diagnose(n, k1, k2, capsys):
    assert main(["diagnose", "--n", str(n)]) == EXIT_OK
    out = capsys.readouterr().out
    assert re.search(rf"^k1 : {k1}\b", out, re.M)
    assert re.search(rf"^k2 : {k2}\b", out, re.M)


def test_diagnose_regimes(capsys):
    assert main(["diagnose", "--n", "100", "--k-theta", "35"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "heuristic" in out
    assert "cases (i)-(iii)" in out and "case (iv)" in out
