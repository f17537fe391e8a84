"""
Time-domain impurity Green's function.

Sign conventions (spin-down impurity orbital, qubit 1):

    G>(t) = -i <c(t) c^dagger>      G<(t) = i <c^dagger c(t)>
    iG_ret(t) = i (G>(t) - G<(t)),  t >= 0

Both are assembled from the interferometric correlators
M(a, b) = <psi| a_1 U^dagger b_1 U |psi> with a, b in {X, Y}; one set of
four correlators serves both G> and G<.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
import numpy.typing as npt
from scipy.linalg import expm

from .circuits import Circuit, fold_evolution, interferometry_circuit, noisy_identity, \
    trotter_step_matrix, trotterized_evolution
from .ground_state import exact_ground_state
from .mitigation import ExtrapolationFit, MitigationSettings, correct_readout, \
    extrapolate_exponential, rescale_with_rate
from .model import AimParameters, aim_matrix, pauli_matrix
from .output import write_csv
from .statevector import NoiseModel, measure_expectation, run_circuit

logger = logging.getLogger(__name__)

AXES = ("X", "Y")
BASES = ("X", "Y")
DEFAULT_DT = 0.5
DEFAULT_STEPS = 6
DEFAULT_SHOTS = 8192

Correlators = Dict[Tuple[str, str], npt.NDArray[np.complex128]]


class GreensError(Exception):
    """Raised for invalid Green's function measurements."""
    pass


class Provenance(Enum):
    SAMPLED = "sampled"
    EXACT_TROTTER = "exact_trotter"
    EXACT_UNITARY = "exact_unitary"


@dataclass
class GreensSeries:
    """Green's function sampled at t_k = k dt."""
    times: npt.NDArray[np.float64]
    g_greater: npt.NDArray[np.complex128]
    g_lesser: npt.NDArray[np.complex128]
    provenance: Provenance
    flags: List[str] = field(default_factory=list)

    @property
    def ig_retarded_complex(self) -> npt.NDArray[np.complex128]:
        return 1j * (self.g_greater - self.g_lesser)

    @property
    def ig_retarded(self) -> npt.NDArray[np.float64]:
        """Fit target; real by particle-hole symmetry."""
        return self.ig_retarded_complex.real

    @property
    def dt(self) -> float:
        if len(self.times) < 2:
            raise GreensError("A single time point has no spacing")
        return float(self.times[1] - self.times[0])

    def __len__(self) -> int:
        return len(self.times)


def assemble_greens(m: Correlators) -> Tuple[npt.NDArray[np.complex128], npt.NDArray[np.complex128]]:
    """
    G> and G< from the four interferometric correlators.

    <U^dagger b U a> is the conjugate of M(a, b), which is how the reversed
    operator orderings of G> are obtained from the same measurements.
    """
    xx, xy, yx, yy = m[("X", "X")], m[("X", "Y")], m[("Y", "X")], m[("Y", "Y")]
    g_greater = -0.25j * (np.conj(xx) - 1j * np.conj(yx) + 1j * np.conj(xy) + np.conj(yy))
    g_lesser = 0.25j * (xx + 1j * xy - 1j * yx + yy)
    return g_greater, g_lesser


def _propagated_correlators(state: npt.NDArray[np.complex128],
                            propagators: List[npt.NDArray[np.complex128]]) -> Correlators:
    ops = {axis: pauli_matrix(((1, axis),)) for axis in AXES}
    out: Correlators = {}
    for a, b in itertools.product(AXES, AXES):
        values = []
        for u in propagators:
            evolved = u @ state
            values.append(np.vdot(ops[a] @ state, u.conj().T @ (ops[b] @ evolved)))
        out[(a, b)] = np.asarray(values, dtype=complex)
    return out


def _series(times: npt.NDArray[np.float64], m: Correlators, provenance: Provenance) -> GreensSeries:
    g_greater, g_lesser = assemble_greens(m)
    return GreensSeries(np.asarray(times, dtype=float), g_greater, g_lesser, provenance)


def exact_greens_series(p: AimParameters, times: npt.ArrayLike,
                        state: Optional[npt.NDArray[np.complex128]] = None) -> GreensSeries:
    """Exact propagation exp(-iHt) from the eigendecomposition of the model."""
    times = np.asarray(times, dtype=float)
    psi = exact_ground_state(p)[1] if state is None else np.asarray(state, dtype=complex)
    evals, evecs = np.linalg.eigh(aim_matrix(p))
    propagators = [(evecs * np.exp(-1j * evals * t)) @ evecs.conj().T for t in times]
    return _series(times, _propagated_correlators(psi, propagators), Provenance.EXACT_UNITARY)


def exact_trotter_series(p: AimParameters, n_steps: int, dt: float,
                         state: Optional[npt.NDArray[np.complex128]] = None) -> GreensSeries:
    """Noiseless, infinite-shot series of the Trotterized evolution."""
    psi = exact_ground_state(p)[1] if state is None else np.asarray(state, dtype=complex)
    step = trotter_step_matrix(p, dt)
    propagators = [np.linalg.matrix_power(step, k) for k in range(n_steps + 1)]
    times = dt * np.arange(n_steps + 1)
    return _series(times, _propagated_correlators(psi, propagators), Provenance.EXACT_TROTTER)


def trotter_error_bound(p: AimParameters, n_steps: int, dt: float) -> float:
    """Spectral norm || exp(-iH n dt) - S(dt)^n || of the Trotter product S."""
    if n_steps < 1:
        raise GreensError(f"n_steps must be at least 1, got {n_steps}")
    exact = expm(-1j * aim_matrix(p) * n_steps * dt)
    trotter = np.linalg.matrix_power(trotter_step_matrix(p, dt), n_steps)
    return float(np.linalg.norm(exact - trotter, 2))


def _check_nyquist(p: AimParameters, dt: float) -> None:
    # Outer Hubbard peaks sit near U/2 and are pushed out by up to 2V
    expected = abs(p.u) / 2.0 + 2.0 * p.v
    if expected > math.pi / dt:
        logger.warning(f"Expected frequency ~{expected:.3f} exceeds the Nyquist limit {math.pi / dt:.3f} for dt={dt}")


@dataclass
class _Cell:
    step: int
    alpha: str
    beta: str
    basis: str
    values: List[float]
    zne_fit: Optional[ExtrapolationFit] = None


def measure_greens_series(p: AimParameters, prep: Circuit, n_steps: int = DEFAULT_STEPS,
                          dt: float = DEFAULT_DT, shots: Optional[int] = DEFAULT_SHOTS,
                          noise: Optional[NoiseModel] = None,
                          mitigation: Optional[MitigationSettings] = None,
                          seed: int = 0) -> GreensSeries:
    """
    Measure G>(t_k), G<(t_k) for k = 0..n_steps with interferometry circuits.

    Every (time, alpha, beta, fold, basis) cell draws from its own seeded
    stream, so results do not depend on evaluation order. shots=None yields
    infinite-shot expectations of the same (possibly noisy) circuits.

    Raises:
        GreensError: On shots == 0 or readout mitigation without calibration
    """
    if shots is not None and shots <= 0:
        raise GreensError(f"shots must be positive, got {shots}")
    if n_steps < 0:
        raise GreensError(f"n_steps must be non-negative, got {n_steps}")
    settings = mitigation or MitigationSettings()
    if settings.readout and settings.calibration is None:
        raise GreensError("Readout mitigation requested without calibration data")
    folds = tuple(settings.folds) if settings.zne else (0,)
    if settings.zne and 0 not in folds:
        raise GreensError("ZNE fold counts must include 0")
    _check_nyquist(p, dt)

    fold_two_qubit = noisy_identity(p, dt).two_qubit_count
    cells: List[_Cell] = []
    base_counts: Dict[int, int] = {}
    for k in range(n_steps + 1):
        evolution = trotterized_evolution(p, k, dt)
        for ia, ib in itertools.product(range(2), range(2)):
            alpha, beta = AXES[ia], AXES[ib]
            per_basis: Dict[str, List[float]] = {basis: [] for basis in BASES}
            for fold in folds:
                circuit = interferometry_circuit(prep, fold_evolution(evolution, p, dt, fold), alpha, beta)
                if fold == 0:
                    base_counts[k] = circuit.two_qubit_count
                state = run_circuit(circuit, noise)
                for ic, basis in enumerate(BASES):
                    rng = np.random.default_rng(np.random.SeedSequence([seed, k, ia, ib, fold, ic]))
                    value = measure_expectation(state, basis, shots, noise, rng)
                    if settings.readout:
                        value, _ = correct_readout(value, settings.calibration)
                    per_basis[basis].append(value)
            for basis in BASES:
                cells.append(_Cell(k, alpha, beta, basis, per_basis[basis]))

    flags: List[str] = []
    if settings.zne:
        _extrapolate_cells(cells, folds, base_counts, fold_two_qubit, shots, flags)

    m: Correlators = {(a, b): np.zeros(n_steps + 1, dtype=complex) for a in AXES for b in AXES}
    for cell in cells:
        value = cell.zne_fit.extrapolated if cell.zne_fit is not None else cell.values[0]
        value = float(np.clip(value, -1.0, 1.0))
        weight = 1.0 if cell.basis == "X" else 1j
        m[(cell.alpha, cell.beta)][cell.step] += weight * value

    series = _series(dt * np.arange(n_steps + 1), m, Provenance.SAMPLED)
    series.flags = flags
    logger.info(f"Measured {n_steps + 1} time points (shots={shots}, noise={noise is not None}, "
                f"readout={settings.readout}, zne={settings.zne})")
    return series


def _extrapolate_cells(cells: List[_Cell], folds: Tuple[int, ...], base_counts: Dict[int, int],
                       fold_two_qubit: int, shots: Optional[int], flags: List[str]) -> None:
    floor = 3.0 / np.sqrt(shots) if shots else 1e-12
    for cell in cells:
        cell.zne_fit = extrapolate_exponential(folds, cell.values, base_counts[cell.step],
                                               fold_two_qubit, signal_floor=floor)
    rates = [c.zne_fit.per_gate_rate for c in cells if not c.zne_fit.flagged]
    if not rates:
        flags.append("zne_no_reliable_decay")
        return
    # Cells whose own decay is unusable borrow the median per-gate rate
    median_rate = float(np.median(rates))
    borrowed = 0
    for cell in cells:
        if cell.zne_fit.flagged:
            cell.zne_fit.extrapolated = rescale_with_rate(cell.values[0], median_rate, base_counts[cell.step])
            borrowed += 1
    if borrowed:
        logger.debug(f"{borrowed} of {len(cells)} cells used the median decay rate {median_rate:.4g}")


def write_greens_csv(path, series_list: List[GreensSeries]) -> None:
    """greens.csv: t, Re G>, Im G>, Re G<, Im G<, iG_ret, provenance."""
    header = ["t", "re_g_greater", "im_g_greater", "re_g_lesser", "im_g_lesser", "ig_ret", "provenance"]
    rows = []
    for series in series_list:
        for i, t in enumerate(series.times):
            rows.append([t, series.g_greater[i].real, series.g_greater[i].imag,
                         series.g_lesser[i].real, series.g_lesser[i].imag,
                         series.ig_retarded[i], series.provenance.value])
    write_csv(path, header, rows)
