from __future__ import annotations

import json
import subprocess
import sys

import pytest

from conflap import cli
from conflap.cli import main
from conflap.errors import SolverError
from conflap.experiments import PARAMS, ParameterError, run, validate


def read_json(path):
    return json.loads(path.read_text())


# ---------------------------------------------------------------- passing runs


def test_kappa_report(tmp_path, capsys):
    assert main(["kappa", "--n", "8", "--ahat", "4", "--out", str(tmp_path)]) == 0
    report = read_json(tmp_path / "kappa.json")
    assert report["exact"] == 1
    assert list(report) == ["n", "alpha", "lower", "upper", "exact", "witnesses", "notes"]
    summary = read_json(tmp_path / "kappa_summary.json")
    assert summary["passed"] is True
    assert summary["statement"]
    assert summary["parameters"] == {"n": 8, "ahat": 4}
    assert "PASS" in capsys.readouterr().out


def test_kato_reports_two_thirds(tmp_path, capsys):
    assert main(["kato", "--n", "3", "--samples", "50", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "kato.csv").read_text().splitlines()
    header = lines[0].split(",")
    row = dict(zip(header, lines[1].split(",")))
    assert len(lines) == 2
    assert float(row["complementary_norm"]) == pytest.approx(2 / 3, abs=1e-12)
    assert float(row["expected"]) == pytest.approx(2 / 3, abs=1e-15)
    assert "complementary_norm" in capsys.readouterr().out


def test_csv_format(tmp_path):
    main(["kato", "--dims", "3", "4", "--samples", "20", "--out", str(tmp_path)])
    raw = (tmp_path / "kato.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    value = raw.decode().splitlines()[2].split(",")[-1]
    # 17 significant digits
    assert value == f"{0.75:.17g}"


def test_config_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dims": [5], "samples": 10, "seed": 3}))
    out = tmp_path / "out"
    assert main(["kato", "--config", str(cfg), "--samples", "7", "--out", str(out)]) == 0
    params = read_json(out / "kato_summary.json")["parameters"]
    assert params == {"dims": [5], "samples": 7, "seed": 3}
    assert (out / "kato.csv").read_text().splitlines()[1].startswith("5,")


def test_repeat_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["kato", "--samples", "30", "--seed", "11", "--out", str(out)]) == 0
    assert (a / "kato.csv").read_bytes() == (b / "kato.csv").read_bytes()


def test_no_temporary_files_left(tmp_path):
    main(["kappa", "--n", "7", "--out", str(tmp_path)])
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["kappa.csv", "kappa.json", "kappa_summary.json"]


# ---------------------------------------------------------------- failures


def test_failed_check_exits_one(tmp_path, capsys):
    assert main(["kato", "--n", "5", "--samples", "20", "--tol", "-1", "--out", str(tmp_path)]) == 1
    summary = read_json(tmp_path / "kato_summary.json")
    assert summary["passed"] is False
    assert "FAIL" in capsys.readouterr().out


def test_solver_breach_writes_failure_record(tmp_path, capsys, monkeypatch):
    def breach(name, params):
        raise SolverError("no convergence", eigenvalues=[0.0], residuals=[1.0])

    monkeypatch.setattr(cli, "run", breach)
    (tmp_path / "spectrum.csv").write_text("stale\n")
    code = main(["spectrum", "--grid", "8", "--k", "3", "--out", str(tmp_path)])
    assert code == 1
    record = read_json(tmp_path / "spectrum_summary.json")
    assert record["passed"] is False
    assert record["error"] == "SolverError"
    assert not (tmp_path / "spectrum.csv").exists()
    assert json.loads(capsys.readouterr().err)["error"] == "SolverError"


@pytest.mark.parametrize(
    "argv",
    [
        ["kato", "--bogus", "1"],
        ["nosuch"],
        [],
        ["kappa", "--n", "eight"],
        ["kappa", "--n", "8", "--ahat", "4", "--non-spin"],
        ["kappa", "--n", "8"],
        ["kappa", "--n", "12", "--ahat", "3"],
        ["neck-sweep", "--radii", "0.1", "0.2"],
        ["kato", "--n", "9"],
    ],
)
def test_usage_errors_exit_two(tmp_path, argv, capsys):
    assert main(argv + ["--out", str(tmp_path)] if argv else argv) == 2
    err = capsys.readouterr().err
    assert '"usage"' in err
    assert not any(p.suffix == ".csv" for p in tmp_path.iterdir())


def test_unknown_config_field_exits_two(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dims": [3], "colour": "red"}))
    assert main(["kato", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_config_must_be_an_object(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("[1, 2]")
    assert main(["kato", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_thread_variable_is_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("CONFLAP_THREADS", "zero")
    assert main(["kappa", "--n", "7", "--out", str(tmp_path)]) == 2
    monkeypatch.setenv("CONFLAP_THREADS", "2")
    assert main(["kappa", "--n", "7", "--out", str(tmp_path)]) == 0


# ---------------------------------------------------------------- validation


def test_validate_fills_defaults_and_rejects_types():
    p = validate("kato", {})
    assert p["dims"] == PARAMS["kato"]["dims"][1]
    with pytest.raises(ParameterError):
        validate("kato", {"samples": 2.5})
    with pytest.raises(ParameterError):
        validate("kappa", {"n": 8, "ahat": 4, "spin": "yes"})
    with pytest.raises(ParameterError):
        validate("spectrum", {"model": "klein"})


def test_results_carry_a_statement():
    for name in ("kato", "kappa"):
        assert run(name, {"dims": [3], "samples": 5} if name == "kato" else {"n": 8, "ahat": 4}).statement


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "conflap", "kappa", "--n", "9", "--alpha", "1", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        timeout=120,
    )
    assert proc.returncode == 0
    assert read_json(tmp_path / "kappa.json")["exact"] == 1
