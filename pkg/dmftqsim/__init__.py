"""
dmftqsim: two-site dynamical mean-field theory with a simulated
quantum-circuit impurity solver.
"""

from .analysis import FitParams, QpEstimate, ZMethod, fit_time_series, qp_weight, spectral_analysis
from .circuits import Circuit, ansatz_circuit, interferometry_circuit, trotter_step_circuit, \
    trotterized_evolution
from .config import RunConfig, resolve_config
from .dmft import DmftConfig, DmftRecord, DmftTrace, Solver, dmft_iterate, run_to_self_consistency
from .ground_state import exact_ground_state, optimize_ansatz, prepare_ground_state
from .greens import GreensSeries, Provenance, exact_greens_series, exact_trotter_series, \
    measure_greens_series
from .mitigation import ReadoutCalibration, calibrate_readout, zero_noise_extrapolate
from .model import AimParameters, build_aim_pauli_hamiltonian
from .statevector import Gate, NoiseModel, QuantumState

__version__ = "0.1.0"

__all__ = [
    "AimParameters",
    "Circuit",
    "DmftConfig",
    "DmftRecord",
    "DmftTrace",
    "FitParams",
    "Gate",
    "GreensSeries",
    "NoiseModel",
    "Provenance",
    "QpEstimate",
    "QuantumState",
    "ReadoutCalibration",
    "RunConfig",
    "Solver",
    "ZMethod",
    "ansatz_circuit",
    "build_aim_pauli_hamiltonian",
    "calibrate_readout",
    "dmft_iterate",
    "exact_greens_series",
    "exact_ground_state",
    "exact_trotter_series",
    "fit_time_series",
    "interferometry_circuit",
    "measure_greens_series",
    "optimize_ansatz",
    "prepare_ground_state",
    "qp_weight",
    "resolve_config",
    "run_to_self_consistency",
    "spectral_analysis",
    "trotter_step_circuit",
    "trotterized_evolution",
    "zero_noise_extrapolate",
]
