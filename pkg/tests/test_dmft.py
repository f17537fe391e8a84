import math

import pytest
from pydantic import ValidationError

from dmftqsim.analysis import ZMethod
from dmftqsim.dmft import HISTORY_HEADER, DmftConfig, DmftError, Solver, dmft_iterate, remaining_distance, \
    run_to_self_consistency, write_history_csv


# Near the transition V -> sqrt(Z) contracts by roughly 6/U per step
@pytest.mark.parametrize("u", [6.5, 7.0, 8.0, 10.0])
def test_mott_insulator_is_a_fixed_point(u):
    config = DmftConfig(u=u, v_initial=1.0, max_iterations=200)
    assert config.v_tolerance == 1e-3
    trace = run_to_self_consistency(config)
    assert trace.converged
    assert trace.final_v == 0.0
    assert trace.records[-1].z == 0.0
    assert trace.records[-1].exact_path
    assert trace.fixed_point_residual == pytest.approx(0.0, abs=1e-12)
    assert any("snapped_to_zero" in r.flags for r in trace.records)


def test_noninteracting_loop_converges_immediately():
    trace = run_to_self_consistency(DmftConfig(u=0.0, v_initial=1.0))
    assert trace.converged
    assert trace.iterations == 1
    assert trace.final_v == pytest.approx(1.0, abs=1e-6)


def test_zero_initial_hybridization_is_one_iteration():
    trace = run_to_self_consistency(DmftConfig(u=8.0, v_initial=0.0))
    assert trace.iterations == 1
    assert trace.converged
    assert trace.final_v == 0.0


def test_metallic_fixed_point_for_weak_coupling():
    trace = run_to_self_consistency(DmftConfig(u=2.0, v_initial=1.0, z_method=ZMethod.DERIVATIVE))
    assert trace.converged
    assert 0.5 < trace.final_v < 1.0
    assert trace.final_v == pytest.approx(math.sqrt(trace.records[-1].z), abs=2e-3)


def test_iteration_limit_reports_non_convergence():
    trace = run_to_self_consistency(DmftConfig(u=8.0, v_initial=1.0, max_iterations=2))
    assert not trace.converged
    assert trace.iterations == 2
    assert trace.fixed_point_residual is None


def test_mixing_blends_old_and_new_hybridization():
    config = DmftConfig(u=0.0, v_initial=0.5, mixing=0.25)
    record = dmft_iterate(config, 0.5)
    assert record.v_out == pytest.approx(1.0, abs=1e-6)
    assert record.v_next == pytest.approx(0.75 * record.v_out + 0.25 * 0.5)


def test_exact_trotter_solver_runs():
    record = dmft_iterate(DmftConfig(u=8.0, solver=Solver.EXACT_TROTTER), 1.0)
    assert 0.0 <= record.z <= 1.0
    assert not record.exact_path


def test_noiseless_sampled_solver_in_atomic_limit():
    config = DmftConfig(u=8.0, v_initial=0.0, solver=Solver.SAMPLED, shots=None)
    trace = run_to_self_consistency(config)
    assert trace.converged
    assert trace.final_v == 0.0


def test_negative_hybridization_rejected():
    with pytest.raises(DmftError):
        dmft_iterate(DmftConfig(), -0.5)


def test_config_validation():
    with pytest.raises(ValidationError):
        DmftConfig(unknown_key=1)
    with pytest.raises(ValidationError):
        DmftConfig(n_steps=3)
    assert DmftConfig(z_method="matsubara").z_method is ZMethod.MATSUBARA


def test_noise_model_only_when_noisy():
    assert DmftConfig().noise_model() is None
    noise = DmftConfig(two_qubit_depolarizing=0.01, seed=3).noise_model()
    assert noise.has_gate_noise and noise.seed == 3


def test_history_csv(tmp_path):
    trace = run_to_self_consistency(DmftConfig(u=8.0, v_initial=0.0))
    path = tmp_path / "dmft_history.csv"
    write_history_csv(path, trace)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(HISTORY_HEADER)
    assert len(lines) == 2


def test_remaining_distance_accounts_for_slow_contraction():
    assert remaining_distance(0.01, None) == 0.01
    assert remaining_distance(0.0, 0.5) == 0.0
    assert remaining_distance(0.0009, 0.001) == pytest.approx(0.009)
    assert remaining_distance(0.002, 0.001) == 0.002


@pytest.mark.parametrize("seed", [0, 1])
def test_noisy_mitigated_loop_reaches_mott_insulator(seed):
    config = DmftConfig(u=8.0, v_initial=1.0, solver=Solver.SAMPLED, z_method=ZMethod.SPECTRAL, shots=8192,
                        two_qubit_depolarizing=0.01, readout_p01=0.02, readout_p10=0.02,
                        readout_mitigation=True, zne=True, seed=seed, max_iterations=30)
    trace = run_to_self_consistency(config)
    assert trace.converged
    assert trace.final_v == 0.0
    assert trace.records[-1].z == 0.0
