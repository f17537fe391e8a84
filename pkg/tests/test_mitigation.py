import math

import numpy as np
import pytest

from dmftqsim.circuits import atomic_ground_circuit, fold_evolution, interferometry_circuit, \
    trotterized_evolution
from dmftqsim.mitigation import MitigationError, ReadoutCalibration, calibrate_readout, correct_readout, \
    extrapolate_exponential, rescale_with_rate, zero_noise_extrapolate
from dmftqsim.model import AimParameters
from dmftqsim.statevector import NoiseModel, measure_expectation, readout_bias, run_circuit


def test_calibration_recovers_injected_errors():
    noise = NoiseModel(readout_p01=0.03, readout_p10=0.05)
    cal = calibrate_readout(noise, shots=65536, seed=1)
    assert cal.p01 == pytest.approx(0.03, abs=0.005)
    assert cal.p10 == pytest.approx(0.05, abs=0.005)
    assert cal.to_dict() == {"p01": cal.p01, "p10": cal.p10, "shots": 65536}


def test_noiseless_calibration_is_perfect():
    cal = calibrate_readout(None, shots=2048, seed=0)
    assert cal.p01 == 0.0 and cal.p10 == 0.0
    assert cal.contrast == 1.0


def test_calibration_shot_minimum():
    with pytest.raises(MitigationError):
        calibrate_readout(None, shots=100)


def test_zero_contrast_rejected():
    with pytest.raises(MitigationError):
        ReadoutCalibration(0.5, 0.5, 1024)


def test_correction_inverts_forward_model():
    noise = NoiseModel(readout_p01=0.03, readout_p10=0.05)
    cal = ReadoutCalibration(0.03, 0.05, 65536)
    for z in (-0.9, -0.3, 0.0, 0.7, 0.9):
        corrected, clamped = correct_readout(readout_bias(z, noise), cal)
        assert corrected == pytest.approx(z, abs=1e-12)
        assert not clamped


def test_correction_clamps_to_physical_range():
    value, clamped = correct_readout(1.0, ReadoutCalibration(0.1, 0.0, 4096))
    assert value == 1.0
    assert clamped


def test_exponential_extrapolation_of_exact_decay():
    r = 0.9
    values = [0.6 * r ** (2 + k) for k in (0, 1, 2)]
    fit = extrapolate_exponential((0, 1, 2), values, base_two_qubit=16, fold_two_qubit=8)
    assert not fit.flagged
    assert fit.decay == pytest.approx(0.1, abs=1e-10)
    assert fit.extrapolated == pytest.approx(0.6, abs=1e-10)
    assert fit.per_gate_rate == pytest.approx(1 - r ** (1 / 8), abs=1e-12)
    np.testing.assert_allclose(fit.fitted, values, atol=1e-12)


def test_negative_values_keep_their_sign():
    values = [-0.5 * 0.8**k for k in (0, 1, 2)]
    fit = extrapolate_exponential((0, 1, 2), values, base_two_qubit=4, fold_two_qubit=4)
    assert fit.extrapolated == pytest.approx(-0.5 / 0.8, abs=1e-10)
    assert all(v < 0 for v in fit.fitted)


def test_small_signal_is_flagged():
    fit = extrapolate_exponential((0, 1, 2), [0.3, 0.001, 0.2], 8, 8, signal_floor=0.01)
    assert fit.flagged
    assert fit.extrapolated == 0.3


def test_extrapolation_input_validation():
    with pytest.raises(MitigationError):
        extrapolate_exponential((0, 1), [0.5, 0.4], 8, 8)
    with pytest.raises(MitigationError):
        extrapolate_exponential((1, 2, 3), [0.5, 0.4, 0.3], 8, 8)


def test_rescale_with_rate():
    assert rescale_with_rate(0.5, 0.01, 10) == pytest.approx(0.5 / 0.99**10)


def test_zne_is_exact_under_global_depolarizing_noise():
    p = AimParameters.half_filled(8.0, 1.0)
    prep = atomic_ground_circuit()
    evolution = trotterized_evolution(p, 2, 0.5)

    def build(folds):
        return interferometry_circuit(prep, fold_evolution(evolution, p, 0.5, folds), "X", "X")

    noise = NoiseModel(two_qubit_depolarizing=0.01, global_channel=True)
    clean = measure_expectation(run_circuit(build(0)), "X", None)
    fit = zero_noise_extrapolate(build, (0, 1, 2), "X", None, noise)
    assert fit.extrapolated == pytest.approx(clean, abs=1e-8)
    assert abs(fit.raw[0]) <= abs(clean)


def test_sampled_zne_within_two_sigma_under_global_depolarizing_noise():
    p = AimParameters.half_filled(8.0, 1.0)
    prep = atomic_ground_circuit()
    evolution = trotterized_evolution(p, 0, 0.5)

    def build(folds):
        return interferometry_circuit(prep, fold_evolution(evolution, p, 0.5, folds), "X", "X")

    shots = 8192
    noise = NoiseModel(two_qubit_depolarizing=0.01, global_channel=True)
    clean = measure_expectation(run_circuit(build(0)), "X", None)
    assert clean == pytest.approx(1.0, abs=1e-12)
    fit = zero_noise_extrapolate(build, (0, 1, 2), "X", shots, noise, seed=3)
    assert not fit.flagged
    # Binomial spread of each fold value, carried through the log-linear decay fit
    relative = np.array([1.0 / (math.sqrt(shots) * abs(v)) for v in fit.raw])
    sigma_log_ratio = float(np.max(relative)) / math.sqrt(2.0)
    sigma = abs(fit.extrapolated) * math.sqrt(relative[0] ** 2 + (fit.base_exponent * sigma_log_ratio) ** 2)
    assert abs(fit.extrapolated - clean) <= 2.0 * sigma
