"""
Two-site DMFT self-consistency loop.

Each iteration solves the impurity model at the current hybridization V,
fits the Green's function, extracts the quasiparticle weight Z and updates
V = sqrt(Z) (the Bethe-lattice condition for a single bath site). The loop
stops when successive V agree within v_tolerance.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .analysis import DEFAULT_DELTA, FitParams, QpEstimate, ZMethod, default_temperatures, \
    fit_time_series, frequency_grid, qp_weight
from .ground_state import exact_ground_state, prepare_ground_state
from .greens import GreensSeries, exact_greens_series, exact_trotter_series, measure_greens_series
from .mitigation import MitigationSettings, ReadoutCalibration, calibrate_readout
from .model import AimParameters
from .output import write_csv
from .statevector import NoiseModel

logger = logging.getLogger(__name__)


class DmftError(Exception):
    """Raised for invalid self-consistency requests."""
    pass


class Solver(Enum):
    SAMPLED = "sampled"
    EXACT_TROTTER = "exact_trotter"
    EXACT_UNITARY = "exact_unitary"


class DmftConfig(BaseModel):
    """Parameters of one self-consistency run."""
    model_config = ConfigDict(extra="forbid")

    u: float = 8.0
    v_initial: float = Field(1.0, ge=0.0)
    mu: float = 0.0
    dt: float = Field(0.5, gt=0.0)
    n_steps: int = Field(6, ge=4)
    shots: Optional[int] = Field(8192, gt=0)          # None: infinite-shot expectations
    two_qubit_depolarizing: float = Field(0.0, ge=0.0, le=1.0)
    readout_p01: float = Field(0.0, ge=0.0, le=1.0)
    readout_p10: float = Field(0.0, ge=0.0, le=1.0)
    global_depolarizing: bool = False
    z_method: ZMethod = ZMethod.SPECTRAL
    solver: Solver = Solver.EXACT_UNITARY
    v_tolerance: float = Field(1e-3, gt=0.0)
    v_cutoff: float = Field(1e-2, ge=0.0)
    max_iterations: int = Field(50, ge=1)
    mixing: float = Field(0.0, ge=0.0, le=1.0)
    seed: int = 0
    readout_mitigation: bool = False
    zne: bool = False
    zne_folds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    calibration_shots: int = Field(65536, ge=1024)
    delta: float = Field(DEFAULT_DELTA, gt=0.0)
    omega_min: float = -8.0
    omega_max: float = 8.0
    omega_step: float = Field(0.005, gt=0.0)
    temperatures: List[float] = Field(default_factory=lambda: [float(t) for t in default_temperatures()])
    ansatz_tolerance: float = Field(1e-10, gt=0.0)
    ansatz_max_evals: int = Field(20000, ge=1)
    verify_fixed_point: bool = True

    def parameters(self, v: float) -> AimParameters:
        return AimParameters.half_filled(self.u, v, self.mu)

    def noise_model(self) -> Optional[NoiseModel]:
        if not (self.two_qubit_depolarizing or self.readout_p01 or self.readout_p10):
            return None
        return NoiseModel(
            two_qubit_depolarizing=self.two_qubit_depolarizing,
            readout_p01=self.readout_p01,
            readout_p10=self.readout_p10,
            seed=self.seed,
            global_channel=self.global_depolarizing,
        )

    def omegas(self) -> np.ndarray:
        return frequency_grid(self.omega_min, self.omega_max, self.omega_step)


@dataclass
class DmftRecord:
    """One pass through the loop; v_out = sqrt(Z) before mixing."""
    iteration: int
    v_in: float
    fit: FitParams
    z: float
    v_out: float
    v_next: float
    z_raw: float = 0.0
    exact_path: bool = False
    flags: List[str] = field(default_factory=list)


@dataclass
class DmftTrace:
    records: List[DmftRecord] = field(default_factory=list)
    converged: bool = False
    final_v: float = 0.0
    fixed_point_residual: Optional[float] = None

    @property
    def iterations(self) -> int:
        return len(self.records)


def _iteration_seed(seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])


def solve_impurity(config: DmftConfig, p: AimParameters, seed: int,
                   calibration: Optional[ReadoutCalibration] = None) -> Tuple[GreensSeries, bool, List[str]]:
    """
    Green's function of one impurity problem with the configured solver.

    Returns:
        (series, whether the exact V = 0 path was used, flags)
    """
    flags: List[str] = []
    exact_path = p.v < config.v_cutoff
    if exact_path:
        p = p.with_v(0.0)
    if config.solver is Solver.EXACT_UNITARY:
        times = config.dt * np.arange(config.n_steps + 1)
        return exact_greens_series(p, times, exact_ground_state(p)[1]), exact_path, flags
    if config.solver is Solver.EXACT_TROTTER:
        return exact_trotter_series(p, config.n_steps, config.dt), exact_path, flags

    prep, result = prepare_ground_state(p, v_cutoff=config.v_cutoff, tolerance=config.ansatz_tolerance,
                                        max_evals=config.ansatz_max_evals, seed=seed)
    if not result.converged:
        flags.append("ansatz_not_converged")
    settings = MitigationSettings(
        readout=config.readout_mitigation,
        zne=config.zne,
        calibration=calibration,
        folds=tuple(config.zne_folds),
    )
    series = measure_greens_series(p, prep, config.n_steps, config.dt, shots=config.shots,
                                   noise=config.noise_model(), mitigation=settings, seed=seed)
    flags.extend(series.flags)
    return series, exact_path, flags


def dmft_iterate(config: DmftConfig, v_current: float, iteration: int = 1, seed: int = 0,
                 calibration: Optional[ReadoutCalibration] = None) -> DmftRecord:
    """
    Solve, fit, estimate Z and propose the next hybridization.

    Fit and Z flags are recorded on the returned record rather than raised.
    """
    if v_current < 0:
        raise DmftError(f"Hybridization must be non-negative, got {v_current}")
    p = config.parameters(v_current)
    series, exact_path, flags = solve_impurity(config, p, seed, calibration)
    fit = fit_time_series(series, config.dt)
    if fit.flagged:
        flags.append(f"fit: {fit.note}")
    p_used = p.with_v(0.0) if exact_path else p
    estimate: QpEstimate = qp_weight(config.z_method, fit, p_used, config.omegas(), config.delta,
                                     config.temperatures)
    if estimate.flagged:
        flags.append(f"z: {estimate.note}")
    v_out = math.sqrt(estimate.z)
    v_next = (1.0 - config.mixing) * v_out + config.mixing * v_current
    return DmftRecord(iteration, v_current, fit, estimate.z, v_out, v_next,
                      z_raw=estimate.raw, exact_path=exact_path, flags=flags)


def calibration_for(config: DmftConfig) -> Optional[ReadoutCalibration]:
    if config.solver is not Solver.SAMPLED or not config.readout_mitigation:
        return None
    return calibrate_readout(config.noise_model(), config.calibration_shots, seed=_iteration_seed(config.seed, 0))


def remaining_distance(step: float, previous_step: Optional[float]) -> float:
    """Aitken-style estimate of how far the current iterate is from the fixed point."""
    if previous_step is None or previous_step <= 0.0 or step == 0.0:
        return step
    ratio = step / previous_step
    if ratio >= 1.0:
        return step
    return step / (1.0 - ratio)


def run_to_self_consistency(config: DmftConfig,
                            on_record: Optional[Callable[[DmftRecord], None]] = None) -> DmftTrace:
    """
    Iterate until the estimated distance to the fixed point drops below
    v_tolerance or max_iterations is reached.

    The distance is |V_next - V| / (1 - q) with q the observed contraction
    ratio of consecutive steps, so a slowly contracting sequence near the
    transition keeps iterating instead of stopping at a small nonzero V.
    A proposed V below v_cutoff is snapped to exactly 0; the following
    iteration then runs on the V = 0 path and confirms the fixed point.
    """
    calibration = calibration_for(config)
    trace = DmftTrace()
    v = config.v_initial
    previous_step: Optional[float] = None
    for iteration in range(1, config.max_iterations + 1):
        record = dmft_iterate(config, v, iteration, _iteration_seed(config.seed, iteration), calibration)
        v_next = record.v_next
        if 0.0 < v_next < config.v_cutoff:
            record.flags.append("snapped_to_zero")
            v_next = 0.0
            record.v_next = 0.0
        trace.records.append(record)
        logger.info(f"Iteration {iteration}: V_in={v:.6f} Z={record.z:.6f} V_out={record.v_out:.6f}")
        if on_record is not None:
            on_record(record)
        step = abs(v_next - v)
        done = remaining_distance(step, previous_step) < config.v_tolerance
        previous_step = step
        v = v_next
        if done:
            trace.converged = True
            break

    trace.final_v = v
    if not trace.converged:
        logger.warning(f"No self-consistency after {config.max_iterations} iterations (V={v:.6f})")
    elif config.verify_fixed_point:
        check = dmft_iterate(config, v, trace.iterations + 1,
                             _iteration_seed(config.seed, trace.iterations + 1), calibration)
        trace.fixed_point_residual = abs(check.v_out - v)
        logger.info(f"Converged to V={v:.6f} in {trace.iterations} iterations "
                    f"(fixed-point residual {trace.fixed_point_residual:.2e})")
    return trace


HISTORY_HEADER = ["iteration", "v_in", "alpha1", "alpha2", "omega1", "omega2", "z", "v_out", "flags"]


def write_history_csv(path, trace: DmftTrace) -> None:
    rows = [
        [r.iteration, r.v_in, r.fit.alpha1, r.fit.alpha2, r.fit.omega1, r.fit.omega2, r.z, r.v_out,
         ";".join(r.flags)]
        for r in trace.records
    ]
    write_csv(path, HISTORY_HEADER, rows)
