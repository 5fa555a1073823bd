"""Command-line interface: config resolution, artifacts, exit codes."""

import json
import math
import subprocess
import sys

import pytest

from costatekit.cli import main, parse_config

P = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# config resolution


def test_parse_defaults():
    cfg = parse_config(["costate", "--problem", "LQ1"])
    assert cfg.command == "costate"
    assert cfg.problem == "LQ1"
    assert cfg.tau == (2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
    assert cfg.b is None
    assert cfg.ode_tol == 1e-10
    assert cfg.check_tol == 1e-6
    assert cfg.horizon == 40.0
    assert cfg.N == 800 and cfg.T == 8.0
    assert cfg.emit_json and cfg.emit_csv


def test_parse_flag_values():
    cfg = parse_config(
        [
            "verify",
            "--problem",
            "LQ0",
            "--b",
            "1.5",
            "--tau",
            "2,4,8",
            "--checks",
            "maximum,michel",
            "--no-csv",
        ]
    )
    assert cfg.b == (1.5,)
    assert cfg.tau == (2.0, 4.0, 8.0)
    assert cfg.checks == ("maximum", "michel")
    assert cfg.emit_json and not cfg.emit_csv


def test_parse_toml_with_flag_override(tmp_path):
    cfg_file = tmp_path / "run.toml"
    cfg_file.write_text(
        'problem = "LQ1"\ncheck_tol = 1e-5\nout = "fromfile"\nN = 400\n'
    )
    cfg = parse_config(
        ["oracle", "--config", str(cfg_file), "--out", str(tmp_path / "flagdir")]
    )
    assert cfg.problem == "LQ1"
    assert cfg.check_tol == 1e-5
    assert cfg.N == 400
    # the flag wins over the file
    assert cfg.out == str(tmp_path / "flagdir")


@pytest.mark.parametrize(
    "argv",
    [
        ["costate"],  # missing problem id
        ["shoot", "--problem", "LQ1"],  # missing bracket
        ["shoot", "--problem", "LQ1", "--bracket", "1,2,3"],
        ["costate", "--problem", "LQ1", "--check-tol", "-1"],
        ["costate", "--problem", "LQ1", "--horizon", "0"],
    ],
)
def test_usage_errors_exit_one(argv):
    with pytest.raises(SystemExit) as err:
        parse_config(argv)
    assert err.value.code == 1


def test_unknown_toml_key_exits_one(tmp_path):
    cfg_file = tmp_path / "bad.toml"
    cfg_file.write_text('problem = "LQ1"\nbogus = 1\n')
    with pytest.raises(SystemExit) as err:
        parse_config(["costate", "--config", str(cfg_file)])
    assert err.value.code == 1


# ---------------------------------------------------------------------------
# costate command


def test_costate_command_writes_limit(tmp_path):
    out = tmp_path / "run1"
    assert main(["costate", "--problem", "LQ1", "--out", str(out)]) == 0
    doc = json.loads((out / "limiting.json").read_text())
    assert doc["problem"] == "LQ1"
    assert doc["lambda_star"] == 1.0
    assert abs(doc["psi0_star"][0] + 2.0 * P) <= 1e-6
    assert doc["converged"] is True
    assert abs(doc["lambda_raw"] - 1.0 / math.sqrt(5.0)) <= 1e-6
    assert len(doc["horizons"]) == 6
    assert len(doc["deltas"]) == 5
    header = (out / "horizons.csv").read_text().splitlines()[0]
    assert header == "tau,lambda_n,psi0_1,I_norm"

    # rerunning with the same configuration reproduces the bytes
    out2 = tmp_path / "run2"
    assert main(["costate", "--problem", "LQ1", "--out", str(out2)]) == 0
    assert (out / "limiting.json").read_bytes() == (out2 / "limiting.json").read_bytes()
    assert (out / "horizons.csv").read_bytes() == (out2 / "horizons.csv").read_bytes()


def test_costate_unsettled_sweep_exits_two(tmp_path):
    out = tmp_path / "abn"
    assert main(["costate", "--problem", "ABN1", "--out", str(out)]) == 2
    doc = json.loads((out / "limiting.json").read_text())
    assert doc["converged"] is False
    assert doc["lambda_star"] == 0.0
    assert doc["abnormal"] is True


def test_costate_no_csv_flag(tmp_path):
    out = tmp_path / "nocsv"
    assert main(["costate", "--problem", "CONST1", "--no-csv", "--out", str(out)]) == 0
    assert (out / "limiting.json").exists()
    assert not (out / "horizons.csv").exists()


def test_unknown_problem_exits_two_with_error_artifact(tmp_path):
    out = tmp_path / "nope"
    assert main(["costate", "--problem", "NOPE", "--out", str(out)]) == 2
    doc = json.loads((out / "limiting.json").read_text())
    assert "unknown problem id" in doc["error"]


# ---------------------------------------------------------------------------
# verify command


def test_verify_command_passes_on_regulator(tmp_path):
    out = tmp_path / "verify"
    assert main(["verify", "--problem", "LQ1", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["problem"] == "LQ1"
    assert all(
        c["status"] in ("pass", "not-applicable") for c in report["checks"]
    )
    assert len(report["checks"]) == 7
    lines = (out / "hamiltonian.csv").read_text().splitlines()
    assert lines[0] == "T,H_direct,H_michel"
    assert len(lines) == 102
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    assert abs(float(first[1]) + P) <= 1e-5
    assert (out / "limiting.json").exists()
    assert (out / "horizons.csv").exists()


def test_verify_command_passes_on_degenerate_problem(tmp_path):
    # the check battery applies the degenerate conditions and passes even
    # though the sweep itself reports an unsettled tolerance
    out = tmp_path / "verify_abn"
    assert main(["verify", "--problem", "ABN1", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    statuses = {c["id"]: c["status"] for c in report["checks"]}
    assert statuses["abnormal"] == "pass"
    assert report["converged"] is False


def test_verify_check_subset(tmp_path):
    out = tmp_path / "subset"
    code = main(
        [
            "verify",
            "--problem",
            "LQ1",
            "--checks",
            "maximum,michel",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert [c["id"] for c in report["checks"]] == ["maximum", "michel"]


# ---------------------------------------------------------------------------
# shoot command


def test_shoot_command(tmp_path):
    out = tmp_path / "shoot"
    code = main(["shoot", "--problem", "LQ1", "--bracket=-3,0", "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "shoot.json").read_text())
    assert abs(doc["psi0"] - (-1.2360680)) <= 1e-6
    assert doc["lambda"] == 1.0
    assert doc["status"] == "converged"
    assert abs(doc["closing_residual"]) <= 1e-6
    lines = (out / "bracket.csv").read_text().splitlines()
    assert lines[0] == "iter,psi_lo,psi_hi,psi_mid,residual"
    assert len(lines) >= 30


def test_shoot_command_reports_bad_bracket(tmp_path):
    out = tmp_path / "shootfail"
    code = main(["shoot", "--problem", "LQ1", "--bracket=-0.4,-0.1", "--out", str(out)])
    assert code == 2
    doc = json.loads((out / "shoot.json").read_text())
    assert "no sign change" in doc["error"]
    assert len(doc["residual_table"]) == 9


# ---------------------------------------------------------------------------
# oracle command


def test_oracle_command(tmp_path):
    out = tmp_path / "oracle"
    code = main(
        ["oracle", "--problem", "LQ1", "--N", "400", "--T", "8", "--out", str(out)]
    )
    assert code == 0
    doc = json.loads((out / "oracle.json").read_text())
    assert doc["N"] == 400
    assert doc["status"] == "converged"
    assert abs(doc["value"] - P) <= 1e-2
    assert doc["certificate"]["violations"] == 0
    assert doc["certificate"]["trials"] == 50
    lines = (out / "transcription.csv").read_text().splitlines()
    assert lines[0] == "k,t_k,u_1,x_1,p_1"
    assert len(lines) == 402


# ---------------------------------------------------------------------------
# catalog command and module entry point


def test_catalog_command(capsys):
    assert main(["catalog"]) == 0
    out = capsys.readouterr().out.split()
    assert out == ["LQ1", "LQ1F", "LQ0", "ABN1", "CONST1", "custom"]


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "costatekit", "catalog"],
        capture_output=True,
        text=True,
        timeout=60,
    )
    assert proc.returncode == 0
    assert "LQ1" in proc.stdout.split()
