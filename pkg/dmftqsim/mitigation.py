"""
Error mitigation: readout assignment correction and zero-noise
extrapolation with noisy-identity folds.

Extrapolation assumes every two-qubit gate shrinks traceless ancilla
observables by the same factor (white depolarizing noise), so a measured
value decays as (1 - lambda)^(gate count). Fitting the decay across folds
and dividing it out of the unfolded value gives the zero-noise estimate.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit

from .circuits import Circuit
from .statevector import ANCILLA_QUBIT, Gate, NoiseModel, QuantumState, Seed, apply_circuit, \
    measure_expectation, run_circuit, sample_counts

logger = logging.getLogger(__name__)

MIN_CALIBRATION_SHOTS = 1024
MIN_FOLDS = 3


class MitigationError(Exception):
    """Raised when a mitigation step is ill-posed."""
    pass


@dataclass(frozen=True)
class ReadoutCalibration:
    """Measured assignment probabilities of the ancilla."""
    p01: float      # P(read 1 | prepared 0)
    p10: float      # P(read 0 | prepared 1)
    shots: int

    def __post_init__(self) -> None:
        if self.p01 + self.p10 >= 1.0:
            raise MitigationError(
                f"Readout contrast is not positive (p01={self.p01}, p10={self.p10})"
            )

    @property
    def contrast(self) -> float:
        return 1.0 - self.p01 - self.p10

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class MitigationSettings:
    """Which mitigations a measurement routes its raw expectations through."""
    readout: bool = False
    zne: bool = False
    calibration: Optional[ReadoutCalibration] = None
    folds: Tuple[int, ...] = (0, 1, 2)

    @property
    def active(self) -> bool:
        return self.readout or self.zne


@dataclass
class ExtrapolationFit:
    """Exponential decay fit across fold counts."""
    folds: List[int]
    raw: List[float]
    decay: float                    # per-fold decay rate, 1 - r
    extrapolated: float
    fitted: List[float] = field(default_factory=list)
    per_gate_rate: float = 0.0
    base_exponent: float = 0.0      # unfolded two-qubit count in units of one fold
    flagged: bool = False
    note: str = ""


def calibrate_readout(noise: Optional[NoiseModel], shots: int = 65536, seed: Seed = 0) -> ReadoutCalibration:
    """
    Estimate ancilla assignment errors by preparing |0> and |1> and reading out.

    Raises:
        MitigationError: For fewer than 1024 shots or a zero-contrast channel
    """
    if shots < MIN_CALIBRATION_SHOTS:
        raise MitigationError(f"Calibration needs at least {MIN_CALIBRATION_SHOTS} shots, got {shots}")
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    zero = QuantumState.zero()
    one = apply_circuit(zero, [Gate.x(ANCILLA_QUBIT)])
    _, read1 = sample_counts(zero, "Z", shots, noise, rng)
    read0, _ = sample_counts(one, "Z", shots, noise, rng)
    calibration = ReadoutCalibration(p01=read1 / shots, p10=read0 / shots, shots=shots)
    logger.info(f"Readout calibration: p01={calibration.p01:.4f} p10={calibration.p10:.4f} ({shots} shots)")
    return calibration


def correct_readout(raw_z: float, cal: ReadoutCalibration) -> Tuple[float, bool]:
    """
    Invert the assignment channel on a +/-1 expectation.

    raw = (1 - p01 - p10) z + (p10 - p01), solved for z.

    Returns:
        (corrected value clamped to [-1, 1], whether clamping happened)
    """
    corrected = (raw_z - (cal.p10 - cal.p01)) / cal.contrast
    clamped = float(np.clip(corrected, -1.0, 1.0))
    return clamped, clamped != corrected


def _decay_model(k: np.ndarray, amplitude: float, ratio: float) -> np.ndarray:
    return amplitude * ratio**k


def extrapolate_exponential(folds: Sequence[int], values: Sequence[float], base_two_qubit: int,
                            fold_two_qubit: int, signal_floor: float = 1e-12) -> ExtrapolationFit:
    """
    Fit |value_k| = A r^k and rescale the unfolded value to zero noise.

    Args:
        folds: Fold counts, must contain 0
        values: Measured expectations per fold
        base_two_qubit: Two-qubit gates in the unfolded circuit
        fold_two_qubit: Two-qubit gates added per fold
        signal_floor: Magnitudes at or below this are too small to fit

    Returns:
        ExtrapolationFit; flagged when the decay cannot be estimated
    """
    ks = [int(k) for k in folds]
    vals = [float(v) for v in values]
    if len(ks) < MIN_FOLDS:
        raise MitigationError(f"Extrapolation needs at least {MIN_FOLDS} folds, got {len(ks)}")
    if 0 not in ks:
        raise MitigationError("Fold counts must include 0")
    if len(vals) != len(ks):
        raise MitigationError("One value per fold count is required")
    raw0 = vals[ks.index(0)]

    if fold_two_qubit <= 0:
        return ExtrapolationFit(ks, vals, 0.0, raw0, fitted=list(vals), note="folds add no noisy gates")

    k_arr = np.asarray(ks, dtype=float)
    mags = np.abs(np.asarray(vals))
    if np.any(mags <= signal_floor):
        return ExtrapolationFit(ks, vals, float("nan"), raw0, flagged=True, note="signal below noise floor")

    slope, intercept = np.polyfit(k_arr, np.log(mags), 1)
    amplitude, ratio = float(np.exp(intercept)), float(np.exp(slope))
    try:
        (amplitude, ratio), _ = curve_fit(_decay_model, k_arr, mags, p0=(amplitude, ratio), maxfev=2000)
    except (RuntimeError, ValueError) as e:
        logger.debug(f"curve_fit fell back to the log-linear estimate: {e}")

    decay = 1.0 - ratio
    if -1e-9 < decay < 0.0:
        decay, ratio = 0.0, 1.0
    flagged = False
    note = ""
    if not 0.0 <= decay < 1.0:
        flagged, note = True, f"decay rate {decay:.4g} outside [0, 1)"
        decay, ratio = 0.0, 1.0

    base_exponent = base_two_qubit / fold_two_qubit
    extrapolated = raw0 / ratio**base_exponent
    sign = 1.0 if raw0 >= 0 else -1.0
    return ExtrapolationFit(
        folds=ks,
        raw=vals,
        decay=decay,
        extrapolated=float(extrapolated),
        fitted=[float(sign * _decay_model(k, amplitude, ratio)) for k in k_arr],
        per_gate_rate=float(1.0 - ratio ** (1.0 / fold_two_qubit)),
        base_exponent=base_exponent,
        flagged=flagged,
        note=note,
    )


def rescale_with_rate(raw0: float, per_gate_rate: float, base_two_qubit: int) -> float:
    """Zero-noise estimate from an externally supplied per-gate decay rate."""
    return raw0 / (1.0 - per_gate_rate) ** base_two_qubit


def zero_noise_extrapolate(build: Callable[[int], Circuit], folds: Sequence[int], basis: str,
                           shots: Optional[int], noise: Optional[NoiseModel], seed: int = 0,
                           calibration: Optional[ReadoutCalibration] = None) -> ExtrapolationFit:
    """
    Measure an ancilla observable on folded circuits and extrapolate to zero noise.

    Args:
        build: Maps a fold count k to the circuit with k noisy identities inserted
        folds: Fold counts, including 0
        basis: Ancilla measurement basis
        shots: Shots per fold, or None for infinite-shot expectations
        noise: Simulated processor noise
        seed: Seed of the per-fold sampling streams
        calibration: Readout correction applied to each fold value
    """
    circuits = {k: build(k) for k in folds}
    base = circuits[0].two_qubit_count if 0 in circuits else 0
    per_fold = build(1).two_qubit_count - base
    values = []
    for k in folds:
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        state = run_circuit(circuits[k], noise)
        value = measure_expectation(state, basis, shots, noise, rng)
        if calibration is not None:
            value, _ = correct_readout(value, calibration)
        values.append(value)
    floor = 3.0 / np.sqrt(shots) if shots else 1e-12
    fit = extrapolate_exponential(folds, values, base, per_fold, signal_floor=floor)
    logger.debug(f"ZNE {basis}: raw={values} decay={fit.decay:.4g} extrapolated={fit.extrapolated:.6f}")
    return fit
