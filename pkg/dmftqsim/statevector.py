"""
Dense quantum-state engine for the 5-qubit register.

Two representations share one gate vocabulary: pure statevectors (exact
unitary action, stochastic noise trajectories) and density matrices (exact
noisy expectations). Register size is small enough that both stay dense.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt

from .model import ANCILLA_QUBIT, N_QUBITS, PAULI, PauliTerm

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.Generator, None]

_PAULI_LABELS = ("I", "X", "Y", "Z")
_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
_CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
_PROJ0 = np.diag([1.0, 0.0]).astype(complex)
_PROJ1 = np.diag([0.0, 1.0]).astype(complex)


class SimulationError(Exception):
    """Raised when a circuit cannot be applied to a state."""
    pass


class StateMode(Enum):
    PURE = "pure"
    DENSITY = "density"


class GateKind(Enum):
    RY = "RY"
    RZ = "RZ"
    H = "H"
    X = "X"
    Y = "Y"
    Z = "Z"
    CNOT = "CNOT"
    CONTROLLED_PAULI = "CPAULI"
    TWO_QUBIT_UNITARY = "U2"


_ONE_QUBIT = {GateKind.RY, GateKind.RZ, GateKind.H, GateKind.X, GateKind.Y, GateKind.Z}
_ROTATIONS = {GateKind.RY, GateKind.RZ}


@dataclass(frozen=True)
class Gate:
    """
    One gate of a circuit.

    Two-qubit matrices are written in the basis |q_a q_b> with the first listed
    qubit as the more significant factor; for CNOT and CONTROLLED_PAULI the first
    qubit is the control.
    """
    kind: GateKind
    qubits: Tuple[int, ...]
    angle: Optional[float] = None
    axis: Optional[str] = None
    control_value: int = 1
    unitary: Optional[npt.NDArray[np.complex128]] = field(default=None, compare=False, hash=False)

    def __post_init__(self) -> None:
        expected = 1 if self.kind in _ONE_QUBIT else 2
        if len(self.qubits) != expected:
            raise ValueError(f"{self.kind.value} acts on {expected} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"Gate qubits must be distinct, got {self.qubits}")
        if self.kind in _ROTATIONS and (self.angle is None or not math.isfinite(self.angle)):
            raise ValueError(f"{self.kind.value} needs a finite angle, got {self.angle}")
        if self.kind is GateKind.CONTROLLED_PAULI:
            if self.axis not in ("X", "Y", "Z"):
                raise ValueError(f"Controlled Pauli axis must be X, Y or Z, got {self.axis}")
            if self.control_value not in (0, 1):
                raise ValueError(f"control_value must be 0 or 1, got {self.control_value}")
        if self.kind is GateKind.TWO_QUBIT_UNITARY:
            if self.unitary is None or self.unitary.shape != (4, 4):
                raise ValueError("Two-qubit unitary gate needs a 4x4 matrix")
            if not np.allclose(self.unitary.conj().T @ self.unitary, np.eye(4), atol=1e-10):
                raise ValueError("Two-qubit matrix is not unitary")

    # Constructors

    @classmethod
    def ry(cls, qubit: int, theta: float) -> "Gate":
        return cls(GateKind.RY, (qubit,), angle=float(theta))

    @classmethod
    def rz(cls, qubit: int, theta: float) -> "Gate":
        return cls(GateKind.RZ, (qubit,), angle=float(theta))

    @classmethod
    def h(cls, qubit: int) -> "Gate":
        return cls(GateKind.H, (qubit,))

    @classmethod
    def x(cls, qubit: int) -> "Gate":
        return cls(GateKind.X, (qubit,))

    @classmethod
    def y(cls, qubit: int) -> "Gate":
        return cls(GateKind.Y, (qubit,))

    @classmethod
    def z(cls, qubit: int) -> "Gate":
        return cls(GateKind.Z, (qubit,))

    @classmethod
    def cnot(cls, control: int, target: int) -> "Gate":
        return cls(GateKind.CNOT, (control, target))

    @classmethod
    def controlled_pauli(cls, control: int, target: int, axis: str, control_value: int = 1) -> "Gate":
        return cls(GateKind.CONTROLLED_PAULI, (control, target), axis=axis, control_value=control_value)

    @classmethod
    def two_qubit(cls, qubit_a: int, qubit_b: int, matrix: npt.NDArray[np.complex128]) -> "Gate":
        return cls(GateKind.TWO_QUBIT_UNITARY, (qubit_a, qubit_b), unitary=np.asarray(matrix, dtype=complex))

    @property
    def is_two_qubit(self) -> bool:
        return len(self.qubits) == 2

    def matrix(self) -> npt.NDArray[np.complex128]:
        if self.kind is GateKind.RY:
            c, s = math.cos(self.angle / 2.0), math.sin(self.angle / 2.0)
            return np.array([[c, -s], [s, c]], dtype=complex)
        if self.kind is GateKind.RZ:
            phase = np.exp(-0.5j * self.angle)
            return np.diag([phase, phase.conjugate()])
        if self.kind is GateKind.H:
            return _HADAMARD
        if self.kind in (GateKind.X, GateKind.Y, GateKind.Z):
            return PAULI[self.kind.value]
        if self.kind is GateKind.CNOT:
            return _CNOT
        if self.kind is GateKind.CONTROLLED_PAULI:
            target = PAULI[self.axis]
            if self.control_value == 1:
                return np.kron(_PROJ0, PAULI["I"]) + np.kron(_PROJ1, target)
            return np.kron(_PROJ1, PAULI["I"]) + np.kron(_PROJ0, target)
        return self.unitary

    def inverse(self) -> "Gate":
        if self.kind in _ROTATIONS:
            return Gate(self.kind, self.qubits, angle=-self.angle)
        if self.kind is GateKind.TWO_QUBIT_UNITARY:
            return Gate.two_qubit(self.qubits[0], self.qubits[1], self.unitary.conj().T)
        # H, Paulis, CNOT and controlled Paulis are involutions
        return self

    def describe(self) -> str:
        """One dump line: name, comma-separated qubits, then angle or axis/control value."""
        qubits = ",".join(str(q) for q in self.qubits)
        if self.kind in _ROTATIONS:
            return f"{self.kind.value} {qubits} {self.angle!r}"
        if self.kind is GateKind.CONTROLLED_PAULI:
            return f"{self.kind.value} {qubits} {self.axis}{self.control_value}"
        return f"{self.kind.value} {qubits}"


@dataclass(frozen=True)
class NoiseModel:
    """Gate and readout noise of the simulated processor."""
    two_qubit_depolarizing: float = 0.0   # epsilon_2 after every two-qubit gate
    readout_p01: float = 0.0              # P(read 1 | ancilla in 0)
    readout_p10: float = 0.0              # P(read 0 | ancilla in 1)
    seed: Optional[int] = None
    global_channel: bool = False          # depolarize the whole register instead of the gate pair

    def __post_init__(self) -> None:
        for name in ("two_qubit_depolarizing", "readout_p01", "readout_p10"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @property
    def has_gate_noise(self) -> bool:
        return self.two_qubit_depolarizing > 0.0

    @property
    def has_readout_error(self) -> bool:
        return self.readout_p01 > 0.0 or self.readout_p10 > 0.0


@dataclass
class QuantumState:
    """Pure statevector (2^n,) or density matrix (2^n, 2^n) over n qubits."""
    mode: StateMode
    data: npt.NDArray[np.complex128]
    n_qubits: int = N_QUBITS

    @classmethod
    def zero(cls, n_qubits: int = N_QUBITS, mode: StateMode = StateMode.PURE) -> "QuantumState":
        dim = 2**n_qubits
        if mode is StateMode.PURE:
            data = np.zeros(dim, dtype=complex)
            data[0] = 1.0
        else:
            data = np.zeros((dim, dim), dtype=complex)
            data[0, 0] = 1.0
        return cls(mode, data, n_qubits)

    @classmethod
    def from_vector(cls, vector: npt.ArrayLike, n_qubits: int = N_QUBITS,
                    mode: StateMode = StateMode.PURE) -> "QuantumState":
        """
        Embed a vector on the lowest qubits, remaining (higher) qubits in |0>.

        A 16-dimensional system vector therefore lands with the ancilla in |0>.
        """
        vec = np.asarray(vector, dtype=complex).ravel()
        dim = 2**n_qubits
        if vec.size > dim or vec.size & (vec.size - 1):
            raise SimulationError(f"Cannot embed a vector of length {vec.size} into {n_qubits} qubits")
        norm = np.linalg.norm(vec)
        if norm == 0:
            raise SimulationError("Cannot build a state from a zero vector")
        full = np.zeros(dim, dtype=complex)
        full[: vec.size] = vec / norm
        state = cls(StateMode.PURE, full, n_qubits)
        return state.to_density() if mode is StateMode.DENSITY else state

    def copy(self) -> "QuantumState":
        return QuantumState(self.mode, self.data.copy(), self.n_qubits)

    def to_density(self) -> "QuantumState":
        if self.mode is StateMode.DENSITY:
            return self.copy()
        return QuantumState(StateMode.DENSITY, np.outer(self.data, self.data.conj()), self.n_qubits)

    def trace(self) -> float:
        if self.mode is StateMode.PURE:
            return float(np.vdot(self.data, self.data).real)
        return float(np.trace(self.data).real)

    def probabilities(self) -> npt.NDArray[np.float64]:
        if self.mode is StateMode.PURE:
            return np.abs(self.data) ** 2
        return np.clip(np.diagonal(self.data).real, 0.0, None)

    def qubit_marginal(self, qubit: int) -> float:
        """Probability of reading |0> on one qubit."""
        probs = self.probabilities().reshape((2,) * self.n_qubits)
        axis = self.n_qubits - qubit
        return float(np.take(probs, 0, axis=axis).sum() / probs.sum())


def _apply_tensor(tensor: npt.NDArray[np.complex128], matrix: npt.NDArray[np.complex128],
                  axes: List[int]) -> npt.NDArray[np.complex128]:
    m = len(axes)
    gate = matrix.reshape((2,) * (2 * m))
    out = np.tensordot(gate, tensor, axes=(list(range(m, 2 * m)), axes))
    return np.moveaxis(out, list(range(m)), axes)


def _check_gate(gate: Gate, n_qubits: int) -> None:
    for qubit in gate.qubits:
        if not 1 <= qubit <= n_qubits:
            raise SimulationError(f"{gate.kind.value} uses qubit {qubit} outside 1..{n_qubits}")


def _apply_matrix(state: QuantumState, matrix: npt.NDArray[np.complex128],
                  qubits: Sequence[int]) -> QuantumState:
    n = state.n_qubits
    if state.mode is StateMode.PURE:
        tensor = state.data.reshape((2,) * n)
        tensor = _apply_tensor(tensor, matrix, [n - q for q in qubits])
        return QuantumState(state.mode, tensor.reshape(-1), n)
    tensor = state.data.reshape((2,) * (2 * n))
    tensor = _apply_tensor(tensor, matrix, [n - q for q in qubits])
    tensor = _apply_tensor(tensor, matrix.conj(), [2 * n - q for q in qubits])
    dim = 2**n
    return QuantumState(state.mode, tensor.reshape(dim, dim), n)


def _apply_paulis(state: QuantumState, labels: Sequence[Tuple[int, str]]) -> QuantumState:
    for qubit, label in labels:
        if label != "I":
            state = _apply_matrix(state, PAULI[label], (qubit,))
    return state


def depolarizing_channel(state: QuantumState, pair: Tuple[int, int], epsilon: float) -> QuantumState:
    """
    Two-qubit depolarizing channel on a density matrix.

    rho -> (1 - eps) rho + eps * Tr_pair(rho) (x) I/4
    """
    if state.mode is not StateMode.DENSITY:
        raise SimulationError("Depolarizing channel needs a density-matrix state")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon == 0.0:
        return state.copy()
    n = state.n_qubits
    qa, qb = pair
    rows = [n - qa, n - qb]
    cols = [2 * n - qa, 2 * n - qb]
    tensor = state.data.reshape((2,) * (2 * n))
    moved = np.moveaxis(tensor, rows + cols, [-4, -3, -2, -1])
    shape = moved.shape
    block = moved.reshape(shape[:-4] + (4, 4))
    reduced = np.trace(block, axis1=-2, axis2=-1)
    mixed = (reduced[..., None, None] * (np.eye(4) / 4.0)).reshape(shape)
    out = (1.0 - epsilon) * moved + epsilon * mixed
    out = np.moveaxis(out, [-4, -3, -2, -1], rows + cols)
    dim = 2**n
    return QuantumState(state.mode, out.reshape(dim, dim), n)


def global_depolarizing_channel(state: QuantumState, epsilon: float) -> QuantumState:
    """rho -> (1 - eps) rho + eps * I/d over the whole register."""
    if state.mode is not StateMode.DENSITY:
        raise SimulationError("Depolarizing channel needs a density-matrix state")
    dim = 2**state.n_qubits
    data = (1.0 - epsilon) * state.data + epsilon * np.eye(dim) / dim
    return QuantumState(state.mode, data, state.n_qubits)


def _as_generator(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _trajectory_kick(state: QuantumState, gate: Gate, noise: NoiseModel,
                     rng: np.random.Generator) -> QuantumState:
    # A uniformly drawn Pauli (identity included) with probability eps reproduces
    # the density-matrix channel on average.
    if rng.random() >= noise.two_qubit_depolarizing:
        return state
    if noise.global_channel:
        draws = rng.integers(4, size=state.n_qubits)
        labels = [(q, _PAULI_LABELS[d]) for q, d in zip(range(1, state.n_qubits + 1), draws)]
    else:
        draw = int(rng.integers(16))
        labels = [(gate.qubits[0], _PAULI_LABELS[draw // 4]), (gate.qubits[1], _PAULI_LABELS[draw % 4])]
    return _apply_paulis(state, labels)


def apply_circuit(state: QuantumState, circuit: Iterable[Gate], noise: Optional[NoiseModel] = None,
                  rng: Seed = None) -> QuantumState:
    """
    Apply gates in order and return the new state.

    Density mode with noise applies the depolarizing channel after every
    two-qubit gate. Pure mode with noise samples one stochastic trajectory and
    needs a seed, either through rng or noise.seed.

    Raises:
        SimulationError: On out-of-range qubits or unseeded pure-mode noise
    """
    noisy = noise is not None and noise.has_gate_noise
    generator: Optional[np.random.Generator] = None
    if noisy and state.mode is StateMode.PURE:
        if rng is None and noise.seed is None:
            raise SimulationError("Noisy pure-state simulation requires a seed")
        generator = _as_generator(rng if rng is not None else noise.seed)

    current = state.copy()
    for gate in circuit:
        _check_gate(gate, current.n_qubits)
        current = _apply_matrix(current, gate.matrix(), gate.qubits)
        if not (noisy and gate.is_two_qubit):
            continue
        if current.mode is StateMode.DENSITY:
            if noise.global_channel:
                current = global_depolarizing_channel(current, noise.two_qubit_depolarizing)
            else:
                current = depolarizing_channel(current, gate.qubits, noise.two_qubit_depolarizing)
        else:
            current = _trajectory_kick(current, gate, noise, generator)
    return current


def circuit_unitary(circuit: Iterable[Gate], n_qubits: int = N_QUBITS) -> npt.NDArray[np.complex128]:
    """Dense unitary of a noiseless gate sequence."""
    dim = 2**n_qubits
    tensor = np.eye(dim, dtype=complex).reshape((2,) * n_qubits + (dim,))
    for gate in circuit:
        _check_gate(gate, n_qubits)
        tensor = _apply_tensor(tensor, gate.matrix(), [n_qubits - q for q in gate.qubits])
    return tensor.reshape(dim, dim)


def pauli_expectation(state: QuantumState,
                      term: Union[PauliTerm, Sequence[Tuple[int, str]]]) -> float:
    """Exact <P> for a coefficient-free Pauli string."""
    factors = term.factors if isinstance(term, PauliTerm) else tuple(term)
    if state.mode is StateMode.PURE:
        image = _apply_paulis(state, factors)
        return float(np.vdot(state.data, image.data).real)
    n = state.n_qubits
    tensor = state.data.reshape((2,) * (2 * n))
    for qubit, label in factors:
        tensor = _apply_tensor(tensor, PAULI[label], [n - qubit])
    dim = 2**n
    return float(np.trace(tensor.reshape(dim, dim)).real)


def basis_rotation(basis: str, qubit: int = ANCILLA_QUBIT) -> List[Gate]:
    """Gates that map the given Pauli basis onto Z before measurement."""
    if basis == "X":
        return [Gate.h(qubit)]
    if basis == "Y":
        # S^dagger is Rz(-pi/2) up to a global phase
        return [Gate.rz(qubit, -math.pi / 2.0), Gate.h(qubit)]
    if basis == "Z":
        return []
    raise ValueError(f"Unknown measurement basis: {basis}")


def sample_counts(state: QuantumState, basis: str, shots: int, noise: Optional[NoiseModel],
                  rng: Seed, qubit: int = ANCILLA_QUBIT) -> Tuple[int, int]:
    """
    Measure one qubit `shots` times in the given basis.

    Returns:
        (reads of 0, reads of 1) after readout assignment errors
    """
    if shots <= 0:
        raise SimulationError(f"shots must be positive, got {shots}")
    rotated = apply_circuit(state, basis_rotation(basis, qubit))
    p0 = min(max(rotated.qubit_marginal(qubit), 0.0), 1.0)
    generator = _as_generator(rng)
    true0 = int(generator.binomial(shots, p0))
    true1 = shots - true0
    if noise is not None and noise.has_readout_error:
        flipped_up = int(generator.binomial(true0, noise.readout_p01))
        flipped_down = int(generator.binomial(true1, noise.readout_p10))
        read0 = true0 - flipped_up + flipped_down
    else:
        read0 = true0
    return read0, shots - read0


def sample_expectation(state: QuantumState, ancilla_basis: str, shots: int,
                       noise: Optional[NoiseModel] = None, rng_seed: Seed = None) -> float:
    """Finite-shot estimate (n0 - n1) / shots of the ancilla Pauli expectation."""
    read0, read1 = sample_counts(state, ancilla_basis, shots, noise, rng_seed)
    return (read0 - read1) / shots


def readout_bias(value: float, noise: Optional[NoiseModel]) -> float:
    """Infinite-shot effect of the assignment channel on a +/-1 observable."""
    if noise is None or not noise.has_readout_error:
        return value
    return value * (1.0 - noise.readout_p01 - noise.readout_p10) + (noise.readout_p10 - noise.readout_p01)


def run_circuit(circuit: Iterable[Gate], noise: Optional[NoiseModel] = None,
                n_qubits: int = N_QUBITS) -> QuantumState:
    """
    Simulate a circuit from |0...0>.

    Gate noise switches to the density-matrix engine so the resulting state is
    the exact noisy average rather than one trajectory.
    """
    if noise is not None and noise.has_gate_noise:
        return apply_circuit(QuantumState.zero(n_qubits, StateMode.DENSITY), circuit, noise)
    return apply_circuit(QuantumState.zero(n_qubits), circuit)


def measure_expectation(state: QuantumState, basis: str, shots: Optional[int],
                        noise: Optional[NoiseModel] = None, rng: Seed = None,
                        qubit: int = ANCILLA_QUBIT) -> float:
    """
    Readout of one qubit in the X, Y or Z basis.

    shots=None gives the infinite-shot value, still biased by readout error.
    """
    if shots is None:
        return readout_bias(pauli_expectation(state, ((qubit, basis),)), noise)
    if qubit == ANCILLA_QUBIT:
        return sample_expectation(state, basis, shots, noise, rng)
    read0, read1 = sample_counts(state, basis, shots, noise, rng, qubit=qubit)
    return (read0 - read1) / shots
