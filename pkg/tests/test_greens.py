import math

import numpy as np
import pytest

from dmftqsim.circuits import atomic_ground_circuit
from dmftqsim.ground_state import circuit_state
from dmftqsim.greens import GreensError, Provenance, exact_greens_series, exact_trotter_series, \
    measure_greens_series, trotter_error_bound, write_greens_csv
from dmftqsim.mitigation import MitigationSettings, ReadoutCalibration
from dmftqsim.model import AimParameters
from dmftqsim.statevector import NoiseModel


TIMES = 0.5 * np.arange(7)


def test_retarded_function_starts_at_one():
    for u, v in [(8.0, 1.0), (4.0, 0.3), (0.0, 1.0)]:
        series = exact_greens_series(AimParameters.half_filled(u, v), TIMES)
        assert series.ig_retarded[0] == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(series.ig_retarded_complex.imag, 0.0, atol=1e-12)


def test_atomic_limit_is_single_cosine():
    series = exact_greens_series(AimParameters.half_filled(8.0, 0.0), TIMES)
    np.testing.assert_allclose(series.ig_retarded, np.cos(4.0 * TIMES), atol=1e-12)


def test_noninteracting_limit_oscillates_at_hybridization():
    series = exact_greens_series(AimParameters.half_filled(0.0, 1.0), TIMES)
    np.testing.assert_allclose(series.ig_retarded, np.cos(TIMES), atol=1e-12)


def test_trotterization_is_exact_without_hybridization():
    p = AimParameters.half_filled(8.0, 0.0)
    exact = exact_greens_series(p, TIMES)
    trotter = exact_trotter_series(p, 6, 0.5)
    assert trotter.provenance is Provenance.EXACT_TROTTER
    np.testing.assert_allclose(trotter.g_greater, exact.g_greater, atol=1e-12)
    np.testing.assert_allclose(trotter.g_lesser, exact.g_lesser, atol=1e-12)


def test_trotter_deviation_within_error_bound():
    p = AimParameters.half_filled(8.0, 1.0)
    exact = exact_greens_series(p, 0.5 * np.arange(8))
    trotter = exact_trotter_series(p, 7, 0.5)
    deviation = np.abs(trotter.ig_retarded - exact.ig_retarded)
    assert deviation[0] == pytest.approx(0.0, abs=1e-12)
    for k in range(1, 8):
        assert deviation[k] <= 2.0 * trotter_error_bound(p, k, 0.5) + 1e-12


def test_trotter_error_is_quadratic_in_step_at_fixed_step_count():
    p = AimParameters.half_filled(8.0, 1.0)
    steps = [0.05, 0.025, 0.0125]
    errors = [trotter_error_bound(p, 7, dt) for dt in steps]
    slopes = np.diff(np.log(errors)) / np.diff(np.log(steps))
    np.testing.assert_allclose(slopes, 2.0, atol=0.1)


def test_infinite_shot_interferometry_matches_trotter_reference():
    p = AimParameters.half_filled(8.0, 1.0)
    prep = atomic_ground_circuit()
    measured = measure_greens_series(p, prep, n_steps=3, dt=0.5, shots=None)
    reference = exact_trotter_series(p, 3, 0.5, state=circuit_state(prep))
    np.testing.assert_allclose(measured.g_greater, reference.g_greater, atol=1e-10)
    np.testing.assert_allclose(measured.g_lesser, reference.g_lesser, atol=1e-10)


def test_sampled_interferometry_within_shot_noise():
    p = AimParameters.half_filled(8.0, 1.0)
    prep = atomic_ground_circuit()
    shots = 2**17
    measured = measure_greens_series(p, prep, n_steps=2, dt=0.5, shots=shots, seed=4)
    reference = exact_trotter_series(p, 2, 0.5, state=circuit_state(prep))
    tolerance = 4.0 / math.sqrt(shots)
    np.testing.assert_allclose(measured.g_greater, reference.g_greater, atol=tolerance)
    np.testing.assert_allclose(measured.g_lesser, reference.g_lesser, atol=tolerance)


def test_sampling_is_deterministic_for_a_seed():
    p = AimParameters.half_filled(8.0, 0.0)
    prep = atomic_ground_circuit()
    a = measure_greens_series(p, prep, n_steps=4, shots=1024, seed=9)
    b = measure_greens_series(p, prep, n_steps=4, shots=1024, seed=9)
    np.testing.assert_array_equal(a.g_greater, b.g_greater)
    np.testing.assert_array_equal(a.g_lesser, b.g_lesser)


def test_readout_mitigation_removes_assignment_bias():
    p = AimParameters.half_filled(8.0, 1.0)
    prep = atomic_ground_circuit()
    noise = NoiseModel(readout_p01=0.03, readout_p10=0.05)
    settings = MitigationSettings(readout=True, calibration=ReadoutCalibration(0.03, 0.05, 65536))
    mitigated = measure_greens_series(p, prep, n_steps=2, shots=None, noise=noise, mitigation=settings)
    clean = measure_greens_series(p, prep, n_steps=2, shots=None)
    np.testing.assert_allclose(mitigated.g_greater, clean.g_greater, atol=1e-12)
    np.testing.assert_allclose(mitigated.g_lesser, clean.g_lesser, atol=1e-12)


def test_invalid_measurement_requests():
    p = AimParameters.half_filled(8.0, 0.0)
    prep = atomic_ground_circuit()
    with pytest.raises(GreensError):
        measure_greens_series(p, prep, shots=0)
    with pytest.raises(GreensError):
        measure_greens_series(p, prep, mitigation=MitigationSettings(readout=True))


def test_greens_csv_layout(tmp_path):
    p = AimParameters.half_filled(8.0, 0.0)
    path = tmp_path / "greens.csv"
    write_greens_csv(path, [exact_greens_series(p, TIMES), exact_trotter_series(p, 6, 0.5)])
    lines = path.read_text().splitlines()
    assert lines[0] == "t,re_g_greater,im_g_greater,re_g_lesser,im_g_lesser,ig_ret,provenance"
    assert len(lines) == 1 + 14
    assert lines[1].endswith("exact_unitary")
    assert lines[-1].endswith("exact_trotter")


@pytest.mark.parametrize("epsilon", [0.005, 0.01, 0.02])
def test_zne_lowers_rms_error_of_noisy_series(epsilon):
    p = AimParameters.half_filled(8.0, 1.0)
    prep = atomic_ground_circuit()
    noise = NoiseModel(two_qubit_depolarizing=epsilon)
    reference = exact_trotter_series(p, 6, 0.5, state=circuit_state(prep)).ig_retarded
    raw = measure_greens_series(p, prep, n_steps=6, dt=0.5, shots=None, noise=noise)
    mitigated = measure_greens_series(p, prep, n_steps=6, dt=0.5, shots=None, noise=noise,
                                      mitigation=MitigationSettings(zne=True))

    def rms(series):
        return float(np.sqrt(np.mean((series.ig_retarded - reference) ** 2)))

    assert rms(mitigated) <= rms(raw)
