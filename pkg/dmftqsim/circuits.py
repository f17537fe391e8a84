"""
Circuit builders for the impurity solver.

Three families are produced here: the 8-angle ground-state ansatz, the
first-order Trotter step of the qubit Hamiltonian, and the ancilla
interferometry wrapper used to measure two-time correlators.

Dump format (Circuit.dump): a header line ``# qubits=<n> two_qubit=<count>``
followed by one gate per line, ``<NAME> <q1>[,<q2>] [angle | axis+control]``,
e.g. ``RY 3 0.25`` or ``CPAULI 5,1 X0``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np
import numpy.typing as npt
from scipy.linalg import expm

from .model import ANCILLA_QUBIT, N_QUBITS, N_SYSTEM_QUBITS, AimParameters, PauliTerm, \
    build_aim_pauli_hamiltonian, terms_matrix
from .statevector import Gate, circuit_unitary

logger = logging.getLogger(__name__)

N_ANSATZ_ANGLES = 8


class CircuitError(Exception):
    """Raised for malformed circuit requests."""
    pass


@dataclass
class Circuit:
    """Ordered gate list over a fixed register."""
    gates: List[Gate] = field(default_factory=list)
    n_qubits: int = N_QUBITS

    @property
    def two_qubit_count(self) -> int:
        return sum(1 for gate in self.gates if gate.is_two_qubit)

    def qubits_used(self) -> Set[int]:
        return {q for gate in self.gates for q in gate.qubits}

    def append(self, gate: Gate) -> None:
        self.gates.append(gate)

    def extend(self, gates: Sequence[Gate]) -> None:
        self.gates.extend(gates)

    def inverse(self) -> "Circuit":
        return Circuit([gate.inverse() for gate in reversed(self.gates)], self.n_qubits)

    def repeat(self, count: int) -> "Circuit":
        return Circuit(list(self.gates) * count, self.n_qubits)

    def matrix(self, n_qubits: Optional[int] = None) -> npt.NDArray[np.complex128]:
        """Dense unitary; pass n_qubits=4 for circuits confined to the system register."""
        return circuit_unitary(self.gates, n_qubits or self.n_qubits)

    def dump(self) -> str:
        lines = [f"# qubits={self.n_qubits} two_qubit={self.two_qubit_count}"]
        lines.extend(gate.describe() for gate in self.gates)
        return "\n".join(lines) + "\n"

    def __add__(self, other: "Circuit") -> "Circuit":
        return Circuit(self.gates + other.gates, max(self.n_qubits, other.n_qubits))

    def __iter__(self) -> Iterator[Gate]:
        return iter(self.gates)

    def __len__(self) -> int:
        return len(self.gates)


def ansatz_circuit(thetas: Sequence[float]) -> Circuit:
    """
    Ground-state ansatz with three CNOTs and eight Ry rotations.

    Args:
        thetas: Rotation angles theta_1..theta_8 in radians

    Returns:
        Circuit acting on qubits 1..4
    """
    if len(thetas) != N_ANSATZ_ANGLES:
        raise CircuitError(f"Ansatz needs {N_ANSATZ_ANGLES} angles, got {len(thetas)}")
    t = [float(x) for x in thetas]
    return Circuit([
        Gate.ry(1, t[0]), Gate.ry(2, t[1]), Gate.ry(3, t[2]), Gate.ry(4, t[3]),
        Gate.cnot(3, 4),
        Gate.ry(3, t[4]), Gate.ry(4, t[5]),
        Gate.cnot(1, 3),
        Gate.ry(1, t[6]), Gate.ry(3, t[7]),
        Gate.cnot(1, 2),
    ])


def atomic_ground_circuit() -> Circuit:
    """
    Exact preparation of the paramagnetic V=0 ground state.

    Produces (|q1 q4> + |q2 q3>)/sqrt(2) occupied, i.e. one electron on the
    impurity and one in the bath with opposite spins.
    """
    return Circuit([
        Gate.h(1),
        Gate.cnot(1, 4),    # q4 = q1
        Gate.cnot(1, 2),
        Gate.x(2),          # q2 = not q1
        Gate.cnot(1, 3),
        Gate.x(3),          # q3 = not q1
    ])


def xxyy_block(theta: float, pair: Tuple[int, int]) -> Circuit:
    """
    exp(-i theta (XX + YY) / 2) on a qubit pair with three CNOTs.

    Exact up to the global phase exp(-i pi/4).
    """
    a, b = pair
    if a == b:
        raise CircuitError(f"xxyy_block needs two distinct qubits, got {pair}")
    half_pi = math.pi / 2.0
    return Circuit([
        Gate.rz(a, -half_pi),
        Gate.cnot(b, a),
        Gate.ry(b, half_pi + theta),
        Gate.cnot(a, b),
        Gate.rz(a, half_pi),
        Gate.ry(b, -half_pi - theta),
        Gate.cnot(b, a),
        Gate.rz(b, half_pi),
    ])


def zz_block(phi: float, pair: Tuple[int, int]) -> Circuit:
    """exp(-i phi Z_a Z_b / 2) as CNOT, Rz, CNOT."""
    a, b = pair
    if a == b:
        raise CircuitError(f"zz_block needs two distinct qubits, got {pair}")
    return Circuit([Gate.cnot(a, b), Gate.rz(b, phi), Gate.cnot(a, b)])


def _z_terms(p: AimParameters) -> List[PauliTerm]:
    return [t for t in build_aim_pauli_hamiltonian(p) if len(t.factors) == 1]


def trotter_step_circuit(p: AimParameters, dt: float) -> Circuit:
    """
    One first-order Trotter step, terms applied in this order:

        hopping on (1,2), hopping on (3,4), U/4 Z1Z3, then single-qubit Z terms

    Terms with vanishing coefficient emit no gates.
    """
    if dt <= 0:
        raise CircuitError(f"dt must be positive, got {dt}")
    step = Circuit()
    if p.v != 0.0:
        step = step + xxyy_block(p.v * dt, (1, 2)) + xxyy_block(p.v * dt, (3, 4))
    if p.u != 0.0:
        step = step + zz_block(p.u * dt / 2.0, (1, 3))
    for term in _z_terms(p):
        qubit = term.factors[0][0]
        step.append(Gate.rz(qubit, 2.0 * term.coefficient * dt))
    return step


def trotter_step_matrix(p: AimParameters, dt: float) -> npt.NDArray[np.complex128]:
    """
    Dense 16x16 product of term exponentials in the same order as
    trotter_step_circuit (no global phase).
    """
    if dt <= 0:
        raise CircuitError(f"dt must be positive, got {dt}")
    terms = build_aim_pauli_hamiltonian(p)
    groups: List[List[PauliTerm]] = [
        [t for t in terms if {q for q, _ in t.factors} == {1, 2}],
        [t for t in terms if {q for q, _ in t.factors} == {3, 4}],
        [t for t in terms if {q for q, _ in t.factors} == {1, 3}],
    ]
    groups.extend([t] for t in _z_terms(p))
    step = np.eye(2**N_SYSTEM_QUBITS, dtype=complex)
    for group in groups:
        if group:
            step = expm(-1j * dt * terms_matrix(group)) @ step
    return step


def trotterized_evolution(p: AimParameters, n_steps: int, dt: float) -> Circuit:
    if n_steps < 0:
        raise CircuitError(f"n_steps must be non-negative, got {n_steps}")
    if n_steps == 0:
        return Circuit()
    return trotter_step_circuit(p, dt).repeat(n_steps)


def noisy_identity(p: AimParameters, dt: float) -> Circuit:
    """One Trotter step followed by its exact inverse: identity when noiseless."""
    step = trotter_step_circuit(p, dt)
    return step + step.inverse()


def fold_evolution(evolution: Circuit, p: AimParameters, dt: float, folds: int) -> Circuit:
    """Append `folds` noisy identities to an evolution circuit."""
    if folds < 0:
        raise CircuitError(f"folds must be non-negative, got {folds}")
    if folds == 0:
        return evolution
    return evolution + noisy_identity(p, dt).repeat(folds)


def interferometry_circuit(prep: Circuit, evolution: Circuit, alpha: str, beta: str) -> Circuit:
    """
    Ancilla interferometer for <psi| alpha_1 U^dagger beta_1 U |psi>.

    After this circuit <X_A> + i <Y_A> equals that correlator, with
    |psi> = prep|0> and U = evolution.

    Raises:
        CircuitError: If prep or evolution touches the ancilla, or an axis is not X/Y
    """
    for name, axis in (("alpha", alpha), ("beta", beta)):
        if axis not in ("X", "Y"):
            raise CircuitError(f"{name} must be X or Y, got {axis}")
    for name, part in (("prep", prep), ("evolution", evolution)):
        if ANCILLA_QUBIT in part.qubits_used():
            raise CircuitError(f"{name} circuit uses the ancilla qubit")
    circuit = Circuit(list(prep.gates))
    circuit.append(Gate.h(ANCILLA_QUBIT))
    circuit.append(Gate.controlled_pauli(ANCILLA_QUBIT, 1, alpha, control_value=0))
    circuit.extend(evolution.gates)
    circuit.append(Gate.controlled_pauli(ANCILLA_QUBIT, 1, beta, control_value=1))
    return circuit
