import csv
import json

import numpy as np
import pytest

from dmftqsim.cli import EXIT_CONFIG, EXIT_OK, main


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _run(tmp_path, name, *args):
    out = tmp_path / name
    return main([*args, "--out", str(out)]), out


def test_greens_atomic_limit_references_agree(tmp_path):
    code, out = _run(tmp_path, "greens", "greens", "--set", "u=8", "--set", "v_initial=0")
    assert code == EXIT_OK
    rows = _rows(out / "greens.csv")
    exact = [r for r in rows if r["provenance"] == "exact_unitary"]
    trotter = [r for r in rows if r["provenance"] == "exact_trotter"]
    assert len(exact) == len(trotter) == 7
    np.testing.assert_allclose([float(r["ig_ret"]) for r in trotter],
                               [float(r["ig_ret"]) for r in exact], atol=1e-12)
    fit = json.loads((out / "fit.json").read_text())
    assert fit["omega1"] == pytest.approx(4.0, abs=1e-6)
    assert (out / "spectra.csv").exists()
    assert (out / "resolved_config.yaml").exists()


def test_sampled_greens_is_byte_reproducible(tmp_path):
    args = ["greens", "--set", "solver=sampled", "--set", "shots=1024", "--set", "v_initial=0",
            "--set", "n_steps=4", "--set", "emit_circuit_dump=true", "--seed", "17"]
    code_a, out_a = _run(tmp_path, "a", *args)
    code_b, out_b = _run(tmp_path, "b", *args)
    assert code_a == code_b == EXIT_OK
    for name in ("greens.csv", "fit.json", "spectra.csv", "circuit.txt"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    provenances = {r["provenance"] for r in _rows(out_a / "greens.csv")}
    assert provenances == {"sampled", "exact_unitary", "exact_trotter"}
    assert (out_a / "circuit.txt").read_text().startswith("# qubits=5")


def test_dmft_command_writes_history_and_summary(tmp_path):
    code, out = _run(tmp_path, "dmft", "dmft", "--set", "v_initial=0")
    assert code == EXIT_OK
    assert len(_rows(out / "dmft_history.csv")) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["converged"] is True
    assert summary["final_v"] == 0.0


def test_non_convergence_still_exits_zero(tmp_path):
    code, out = _run(tmp_path, "stuck", "dmft", "--set", "max_iterations=1", "--set", "v_initial=1.0")
    assert code == EXIT_OK
    assert json.loads((out / "summary.json").read_text())["converged"] is False


def test_sweep_writes_one_column_per_combination(tmp_path):
    config = tmp_path / "sweep.yaml"
    config.write_text(
        "u_values: [0.0, 10.0]\n"
        "combinations:\n"
        "  - {solver: exact_unitary, z_method: spectral}\n"
        "  - {solver: exact_unitary, z_method: derivative}\n"
    )
    code, out = _run(tmp_path, "sweep", "sweep-u", "--config", str(config), "--jobs", "2")
    assert code == EXIT_OK
    rows = _rows(out / "z_vs_u.csv")
    assert list(rows[0]) == ["u", "z_exact_unitary_spectral", "z_exact_unitary_derivative"]
    assert float(rows[0]["z_exact_unitary_spectral"]) == pytest.approx(1.0, abs=1e-6)
    assert float(rows[1]["z_exact_unitary_spectral"]) == 0.0
    assert (out / "u_10" / "exact_unitary_spectral" / "dmft_history.csv").exists()


def test_matsubara_ladder(tmp_path):
    code, out = _run(tmp_path, "mats", "matsubara", "--set", "u=2", "--set", "v_initial=1",
                     "--set", "dt_values=[0.5, 0.1]", "--set", "total_time=4.0")
    assert code == EXIT_OK
    for name in ("matsubara_dt0.5.csv", "matsubara_dt0.1.csv", "matsubara_exact.csv"):
        assert (out / name).exists()
    rows = _rows(out / "matsubara_dt0.1.csv")
    assert list(rows[0])[-2:] == ["delta_g", "delta_sigma"]
    summary = json.loads((out / "matsubara_summary.json").read_text())
    assert [entry["dt"] for entry in summary["ladder"]] == [0.5, 0.1]


def test_calibrate_command(tmp_path):
    code, out = _run(tmp_path, "cal", "calibrate", "--set", "readout_p01=0.03", "--set", "readout_p10=0.05",
                     "--set", "two_qubit_depolarizing=0.01", "--set", "v_initial=0", "--set", "shots=null",
                     "--set", "n_steps=2")
    assert code == EXIT_OK
    cal = json.loads((out / "calibration.json").read_text())
    assert cal["p01"] == pytest.approx(0.03, abs=0.005)
    assert cal["p10"] == pytest.approx(0.05, abs=0.005)
    assert [r["k"] for r in _rows(out / "extrapolation.csv")] == ["0", "1", "2"]


@pytest.mark.parametrize("args", [
    ["greens", "--set", "not_a_key=1"],
    ["greens", "--set", "u"],
    ["dmft", "--config", "/nonexistent/run.yaml"],
])
def test_configuration_errors_exit_nonzero(tmp_path, args):
    code, _ = _run(tmp_path, "bad", *args)
    assert code == EXIT_CONFIG


def test_jobs_must_be_positive(tmp_path):
    code, _ = _run(tmp_path, "jobs", "sweep-u", "--jobs", "0")
    assert code == EXIT_CONFIG
