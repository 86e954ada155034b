import csv
import subprocess
import sys
from pathlib import Path

import pytest

from fslris import cli, flsim

ROOT = Path(__file__).resolve().parents[1]
DEFAULT = str(ROOT / "configs" / "default.ini")


def simulate(tmp_path, *extra, name="out"):
    out = tmp_path / name
    code = cli.main(["simulate", "--config", DEFAULT, "--trials", "3", "--out", str(out), *extra])
    return code, out


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_default_config_writes_all_tables(tmp_path):
    code, out = simulate(tmp_path)
    assert code == 0
    rows = read_rows(out / "results.csv")
    assert len(rows) == 1 * 2 * 3  # points x schemes x trials
    assert list(rows[0]) == list(flsim.RESULT_COLUMNS)
    assert len(read_rows(out / "summary.csv")) == 2
    manifest = (out / "manifest").read_text()
    assert "rng_seed = 0" in manifest and "trials = 3" in manifest
    for column in flsim.RESULT_COLUMNS:
        assert f"{column} = " in manifest


def test_sweep_row_counts(tmp_path):
    code, out = simulate(tmp_path, "--sweep", "num_users=4,6", "--scheme", "proposed")
    assert code == 0
    rows = read_rows(out / "results.csv")
    assert len(rows) == 2 * 3
    assert {r["sweep_value"] for r in rows} == {"4", "6"}


def test_rerun_and_workers_are_byte_identical(tmp_path):
    _, a = simulate(tmp_path, "--seed", "5", name="a")
    _, b = simulate(tmp_path, "--seed", "5", name="b")
    _, c = simulate(tmp_path, "--seed", "5", "--workers", "2", name="c")
    ref = (a / "results.csv").read_bytes()
    assert ref == (b / "results.csv").read_bytes() == (c / "results.csv").read_bytes()
    _, d = simulate(tmp_path, "--seed", "6", name="d")
    assert ref != (d / "results.csv").read_bytes()


def test_floats_are_full_precision(tmp_path):
    _, out = simulate(tmp_path, "--scheme", "proposed")
    value = read_rows(out / "results.csv")[0]["T_star"]
    mantissa = value.split("e")[0]
    assert "e" in value and len(mantissa.split(".")[1]) == 17


def test_benchmark_only_leaves_matching_columns_empty(tmp_path):
    code, out = simulate(tmp_path, "--scheme", "benchmark")
    assert code == 0
    for row in read_rows(out / "results.csv"):
        assert row["scheme"] == "benchmark"
        assert all(row[c] == "" for c in flsim.MATCHING_COLUMNS)


def test_bad_field_names_it(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nfoo = 3\n")
    code = cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")])
    assert code == 2
    assert "'foo'" in capsys.readouterr().err
    assert not (tmp_path / "x").exists()


def test_bad_value_names_field(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[scenario]\nnum_users = many\n")
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 2
    assert "num_users" in capsys.readouterr().err


def test_zero_trials_writes_nothing(tmp_path):
    code, out = simulate(tmp_path, "--trials", "0")
    assert code == 2 and not out.exists()


@pytest.mark.parametrize("suite", ["bandwidth", "gradients"])
def test_verify_suites_pass(suite, capsys):
    assert cli.main(["verify", suite]) == 0
    text = capsys.readouterr().out
    assert "PASS" in text and "FAIL" not in text


def test_verify_failure_lists_properties(monkeypatch, capsys):
    from fslris import oracles
    failing = [oracles.Check("made-up property", False, "forced", 0.0)]
    monkeypatch.setattr(oracles, "run_suite", lambda name, seed=0: failing)
    assert cli.main(["verify", "bounds"]) == 1
    assert "made-up property" in capsys.readouterr().err


def test_unknown_suite_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        cli.main(["verify", "astrology"])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "fslris", "simulate", "--trials", "1",
                          "--scheme", "proposed", "--out", str(tmp_path / "m")],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "m" / "results.csv").exists()
