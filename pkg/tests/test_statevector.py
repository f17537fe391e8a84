import math

import numpy as np
import pytest
from scipy.linalg import expm

from dmftqsim.model import PAULI
from dmftqsim.statevector import Gate, NoiseModel, QuantumState, SimulationError, StateMode, \
    apply_circuit, circuit_unitary, depolarizing_channel, measure_expectation, pauli_expectation, \
    readout_bias, sample_counts, sample_expectation


BELL = [Gate.h(1), Gate.cnot(1, 2)]


def test_bell_state_probabilities():
    state = apply_circuit(QuantumState.zero(2), BELL)
    np.testing.assert_allclose(state.probabilities(), [0.5, 0.0, 0.0, 0.5], atol=1e-12)
    assert state.trace() == pytest.approx(1.0)


def test_density_mode_matches_pure_mode():
    gates = [Gate.ry(1, 0.3), Gate.rz(2, 1.1), Gate.cnot(1, 3), Gate.controlled_pauli(3, 2, "Y", 0)]
    pure = apply_circuit(QuantumState.zero(3), gates)
    dense = apply_circuit(QuantumState.zero(3, StateMode.DENSITY), gates)
    np.testing.assert_allclose(dense.data, np.outer(pure.data, pure.data.conj()), atol=1e-12)


def test_rotation_gates_match_exponentials():
    theta = 0.73
    np.testing.assert_allclose(Gate.ry(1, theta).matrix(), expm(-0.5j * theta * PAULI["Y"]), atol=1e-12)
    np.testing.assert_allclose(Gate.rz(1, theta).matrix(), expm(-0.5j * theta * PAULI["Z"]), atol=1e-12)


def test_qubit_one_is_least_significant():
    state = apply_circuit(QuantumState.zero(3), [Gate.x(1)])
    assert state.probabilities()[1] == pytest.approx(1.0)


def test_gate_inverse_undoes_circuit():
    gates = [Gate.ry(1, 0.4), Gate.cnot(1, 2), Gate.rz(2, -1.3), Gate.controlled_pauli(2, 1, "X")]
    inverse = [g.inverse() for g in reversed(gates)]
    np.testing.assert_allclose(circuit_unitary(gates + inverse, 2), np.eye(4), atol=1e-12)


def test_invalid_gates_rejected():
    with pytest.raises(ValueError):
        Gate.cnot(1, 1)
    with pytest.raises(ValueError):
        Gate.controlled_pauli(1, 2, "W")
    with pytest.raises(SimulationError):
        apply_circuit(QuantumState.zero(2), [Gate.h(3)])


def test_full_depolarizing_gives_maximally_mixed_pair():
    state = apply_circuit(QuantumState.zero(2, StateMode.DENSITY), BELL)
    mixed = depolarizing_channel(state, (1, 2), 1.0)
    np.testing.assert_allclose(mixed.data, np.eye(4) / 4.0, atol=1e-12)


def test_depolarizing_preserves_trace_and_scales_correlations():
    noise = NoiseModel(two_qubit_depolarizing=0.2)
    state = apply_circuit(QuantumState.zero(2, StateMode.DENSITY), BELL, noise)
    assert state.trace() == pytest.approx(1.0)
    assert pauli_expectation(state, ((1, "X"), (2, "X"))) == pytest.approx(0.8)


def test_noisy_pure_simulation_needs_seed():
    with pytest.raises(SimulationError):
        apply_circuit(QuantumState.zero(2), BELL, NoiseModel(two_qubit_depolarizing=0.1))


def test_trajectories_average_to_channel():
    noise = NoiseModel(two_qubit_depolarizing=0.3)
    exact = apply_circuit(QuantumState.zero(2, StateMode.DENSITY), BELL, noise).data
    rng = np.random.default_rng(7)
    average = np.zeros((4, 4), dtype=complex)
    n = 4000
    for _ in range(n):
        psi = apply_circuit(QuantumState.zero(2), BELL, noise, rng=rng).data
        average += np.outer(psi, psi.conj())
    np.testing.assert_allclose(average / n, exact, atol=0.05)


def test_sampling_is_reproducible():
    state = apply_circuit(QuantumState.zero(), [Gate.ry(5, 1.0)])
    a = sample_expectation(state, "Z", 4096, rng_seed=11)
    b = sample_expectation(state, "Z", 4096, rng_seed=11)
    assert a == b
    assert a == pytest.approx(math.cos(1.0), abs=0.06)


def test_sample_counts_rejects_zero_shots():
    with pytest.raises(SimulationError):
        sample_counts(QuantumState.zero(), "Z", 0, None, 0)


def test_measurement_bases():
    plus = apply_circuit(QuantumState.zero(), [Gate.h(5)])
    assert measure_expectation(plus, "X", None) == pytest.approx(1.0)
    assert measure_expectation(plus, "Y", None) == pytest.approx(0.0, abs=1e-12)
    y_plus = apply_circuit(plus, [Gate.rz(5, math.pi / 2)])
    assert measure_expectation(y_plus, "Y", None) == pytest.approx(1.0)


def test_readout_bias_forward_model():
    noise = NoiseModel(readout_p01=0.03, readout_p10=0.05)
    assert readout_bias(1.0, noise) == pytest.approx(1.0 - 2 * 0.03)
    assert readout_bias(-1.0, noise) == pytest.approx(-1.0 + 2 * 0.05)
    assert readout_bias(0.4, None) == 0.4
