import csv
import json

import numpy as np
import pytest

from angiosim.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from angiosim.config import DEFAULTS, ConfigError, describe, make_config, parse_config
from angiosim.model import ModelParams

SMALL = "N = 8\nT = 0.1\nseeds = 2\noutput_stride = 5\nh = 0.1\n"


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# -- parse_config ---------------------------------------------------------------

def test_empty_file_gives_defaults(tmp_path):
    cfg = parse_config(_write(tmp_path, ""))
    assert cfg == make_config()
    assert cfg.dt == 0.01 and cfg.N == 100 and len(cfg.box_lo) == cfg.dim


def test_every_key_documented():
    text = describe()
    for key, (_, _, desc) in DEFAULTS.items():
        assert desc and f"{key} = " in text


def test_negative_dt_names_invariant(tmp_path):
    with pytest.raises(ConfigError, match="dt > 0"):
        parse_config(_write(tmp_path, "dt = -0.1\n"))


@pytest.mark.parametrize("text, match", [
    ("bogus = 1\n", "line 1: unknown key"),
    ("# comment\ngamma = 0.5\ngamma = 0.6\n", "line 3: duplicate key"),
    ("\n\nno equals sign\n", "line 3: expected"),
    ("N = ten\n", "line 1: N: cannot parse"),
])
def test_parse_errors_carry_line_numbers(tmp_path, text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(_write(tmp_path, text))


def test_comments_and_whitespace(tmp_path):
    cfg = parse_config(_write(tmp_path, "  gamma=0.25   # anastomosis\n\n# x = 1\nexplicit_diffusion = yes\n"))
    assert cfg.gamma == 0.25 and cfg.explicit_diffusion is True


def test_hash_stable_under_key_reordering(tmp_path):
    a = parse_config(_write(tmp_path, "gamma = 0.5\nN = 30\ndt = 0.02\n", "a.cfg"))
    b = parse_config(_write(tmp_path, "dt = 0.02\ngamma = 0.5\nN = 30\n", "b.cfg"))
    assert a.hash() == b.hash()
    assert a.hash() != make_config().hash()


def test_negative_rate_rejected_at_construction():
    with pytest.raises(ValueError, match="gamma"):
        ModelParams(gamma=-1.0)
    with pytest.raises(ConfigError):
        make_config({"gamma": -1.0})


def test_missing_file_is_usage_error(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == EXIT_USAGE


# -- CLI ----------------------------------------------------------------------------

def test_cli_usage_errors(tmp_path, capsys):
    assert main([]) == EXIT_USAGE
    assert main(["explode"]) == EXIT_USAGE
    assert main(["simulate", "--workers", "0"]) == EXIT_USAGE
    bad = _write(tmp_path, "dt = -0.1\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_USAGE
    assert "dt > 0" in capsys.readouterr().err


def test_gamma_override_echoed_in_manifest(tmp_path):
    cfg = _write(tmp_path, SMALL + "gamma = 0.5\nalpha1 = 0.75\n")
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "11"]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["gamma"] == 0.5 and man["config"]["alpha1"] == 0.75
    assert man["master_seed"] == 11 and man["command"] == "simulate"
    assert man["config_hash"] == parse_config(cfg).replace(master_seed=11).hash()


def test_simulate_files_all_in_manifest(tmp_path):
    cfg = _write(tmp_path, SMALL)
    out = tmp_path / "sim"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    on_disk = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    assert sorted(man["files"]) == on_disk
    assert len(set(man["files"])) == len(man["files"])
    for k in range(2):
        for name in ("trajectory.csv", "events.csv", "counts.csv", "field_final.csv"):
            assert f"run_{k:04d}/{name}" in man["files"]
    summary = _rows(out / "counts_summary.csv")
    assert summary[0] == ["t", "mean_N_t", "mean_M", "min_M", "max_M"]
    assert float(summary[1][2]) == 1.0
    raw = (out / "counts_summary.csv").read_bytes()
    assert b"\r\n" not in raw and b";" not in raw


def test_single_tip_no_rates(tmp_path):
    cfg = _write(tmp_path, "N = 1\nseeds = 1\nT = 0.1\nalpha1 = 0\nbeta1 = 0\ngamma = 0\nh = 0.1\n")
    out = tmp_path / "one"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    counts = _rows(out / "run_0000" / "counts.csv")
    assert all(r[1] == "1" for r in counts[1:])
    assert len(_rows(out / "run_0000" / "events.csv")) == 1


def test_simulate_byte_identical_reruns(tmp_path):
    cfg = _write(tmp_path, SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(cfg), "--out", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", str(cfg), "--out", str(b), "--workers", "2"]) == EXIT_OK
    for p in sorted(a.rglob("*.csv")):
        assert p.read_bytes() == (b / p.relative_to(a)).read_bytes()


def test_meanfield_zero_source_constant_mass(tmp_path):
    cfg = _write(tmp_path, "dim = 1\nalpha1 = 0\nbeta1 = 0\ngamma = 0\nT = 0.2\nh = 0.1\nmf_refine_check = false\n")
    out = tmp_path / "mf"
    assert main(["meanfield", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "mass.csv")[1:]
    M = np.array([float(r[1]) for r in rows])
    leak = np.array([float(r[1]) for r in _rows(out / "leakage.csv")[1:]])
    np.testing.assert_allclose(M + leak, M[0], rtol=1e-12)
    assert leak.max() < 1e-8
    man = json.loads((out / "manifest.json").read_text())
    assert "mass.csv" in man["files"] and "snapshots.csv" in man["files"]


def test_meanfield_rejects_d3(tmp_path, capsys):
    cfg = _write(tmp_path, "dim = 3\n")
    assert main(["meanfield", "--config", str(cfg), "--out", str(tmp_path / "mf")]) == EXIT_USAGE
    assert "mean-field grid supports d <= 2" in capsys.readouterr().err


@pytest.mark.slow
def test_meanfield_d1_self_convergence(tmp_path):
    cfg = _write(tmp_path, "dim = 1\nT = 1.0\n")
    out = tmp_path / "mf"
    assert main(["meanfield", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    sc = json.loads((out / "manifest.json").read_text())["self_convergence"]
    assert sc["pass"] and sc["rel_diff"] <= sc["tol"]


def test_meanfield_self_convergence_failure_exit_code(tmp_path):
    cfg = _write(tmp_path, "dim = 1\nT = 0.2\nh = 0.1\nmf_refine_tol = 1e-15\n")
    assert main(["meanfield", "--config", str(cfg), "--out", str(tmp_path / "mf")]) == EXIT_NUMERIC


def test_converge_single_n(tmp_path):
    cfg = _write(tmp_path, "dim = 1\nT = 0.2\nh = 0.1\nN_list = 20\nconv_seeds = 2\n")
    out = tmp_path / "cv"
    assert main(["converge", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "convergence.csv")
    assert rows[0] == ["N", "mean_metric", "se", "seeds"]
    assert rows[1][0] == "20" and rows[-1][:2] == ["slope", "N/A"]
    assert (out / "convergence_resampled.csv").exists()


def test_converge_slope_row(tmp_path):
    cfg = _write(tmp_path, "dim = 1\nT = 0.2\nh = 0.1\nN_list = 10,20\nconv_seeds = 2\n")
    out = tmp_path / "cv"
    assert main(["converge", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    last = _rows(out / "convergence.csv")[-1]
    assert last[0] == "slope" and np.isfinite(float(last[1]))


def test_verify_only_one_check(tmp_path):
    cfg = _write(tmp_path, "wald_trials = 500\nwald_seeds = 2\n")
    out = tmp_path / "v"
    assert main(["verify", "--config", str(cfg), "--out", str(out), "--only", "wald"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert [s["check"] for s in summary] == ["wald"] and summary[0]["pass"]
    assert _rows(out / "checks.csv")[0] == ["check", "statistic", "tolerance", "pass"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["checks"] == summary


def test_verify_unknown_check(tmp_path):
    assert main(["verify", "--out", str(tmp_path / "v"), "--only", "nope"]) == EXIT_USAGE
