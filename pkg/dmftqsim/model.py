"""
Two-site Anderson impurity model and its Jordan-Wigner qubit encoding.

Qubit layout (used by every module in the package):

    qubit 1 = impurity spin-down    qubit 3 = impurity spin-up
    qubit 2 = bath spin-down        qubit 4 = bath spin-up
    qubit 5 = interferometry ancilla

Qubit k is bit (k - 1) of a computational-basis index, so qubit 1 is the
least-significant bit of the 16/32-dimensional state index. A qubit in |1>
is an occupied orbital, i.e. n_k = (1 - Z_k) / 2.

Energies are in units of the hopping t* (t* = 1), times in units of 1/t*.
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import reduce
from typing import Dict, List, Sequence, Tuple

import numpy as np
import numpy.typing as npt

logger = logging.getLogger(__name__)

N_SYSTEM_QUBITS = 4
ANCILLA_QUBIT = 5
N_QUBITS = 5
SYSTEM_DIM = 2**N_SYSTEM_QUBITS

PAULI: Dict[str, npt.NDArray[np.complex128]] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PauliFactors = Tuple[Tuple[int, str], ...]


class ModelError(Exception):
    """Raised for malformed model parameters or operators."""
    pass


class Spin(Enum):
    """Electron spin projection."""
    UP = "up"
    DOWN = "down"


class Site(Enum):
    """Orbital of the two-site model."""
    IMPURITY = 1
    BATH = 2


# (site, spin) -> qubit index
_ORBITAL_QUBIT = {
    (Site.IMPURITY, Spin.DOWN): 1,
    (Site.BATH, Spin.DOWN): 2,
    (Site.IMPURITY, Spin.UP): 3,
    (Site.BATH, Spin.UP): 4,
}


@dataclass(frozen=True)
class AimParameters:
    """Couplings of the two-site Anderson impurity model."""
    u: float                 # on-site repulsion
    v: float                 # impurity-bath hybridization, >= 0
    eps0: float = 4.0        # impurity level
    eps1: float = 0.0        # bath level
    mu: float = 0.0          # chemical potential

    def __post_init__(self) -> None:
        for name in ("u", "v", "eps0", "eps1", "mu"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ModelError(f"{name} must be finite, got {value}")
        if self.v < 0:
            raise ModelError(f"v must be non-negative, got {self.v}")

    @classmethod
    def half_filled(cls, u: float, v: float, mu: float = 0.0) -> "AimParameters":
        """Particle-hole symmetric point: eps0 - mu = U/2, eps1 - mu = 0."""
        return cls(u=u, v=v, eps0=mu + u / 2.0, eps1=mu, mu=mu)

    def half_filling(self, tol: float = 1e-12) -> bool:
        return (
            abs((self.eps0 - self.mu) - self.u / 2.0) <= tol
            and abs(self.eps1 - self.mu) <= tol
        )

    @property
    def mu_eff(self) -> float:
        """Chemical potential seen by the impurity in the bare Green's function."""
        return self.eps0 - self.mu

    @property
    def eps1_minus_mu(self) -> float:
        return self.eps1 - self.mu

    def with_v(self, v: float) -> "AimParameters":
        return replace(self, v=v)


@dataclass(frozen=True)
class PauliTerm:
    """Real-weighted Pauli string; factors are (qubit, axis) pairs."""
    coefficient: float
    factors: PauliFactors

    def __post_init__(self) -> None:
        if not math.isfinite(self.coefficient):
            raise ModelError(f"Pauli coefficient must be finite, got {self.coefficient}")
        qubits = [q for q, _ in self.factors]
        if len(set(qubits)) != len(qubits):
            raise ModelError(f"Repeated qubit in Pauli term {self.factors}")
        for qubit, axis in self.factors:
            if axis not in ("X", "Y", "Z"):
                raise ModelError(f"Unknown Pauli axis: {axis}")
            if not 1 <= qubit <= N_QUBITS:
                raise ModelError(f"Qubit index out of range: {qubit}")

    @property
    def label(self) -> str:
        return " ".join(f"{axis}{qubit}" for qubit, axis in self.factors)


@dataclass(frozen=True)
class WeightedPauliString:
    """Complex-weighted Pauli string (one half of a Jordan-Wigner pair)."""
    coefficient: complex
    factors: PauliFactors


@dataclass(frozen=True)
class FermionOperator:
    """Creation (dagger=True) or annihilation operator on one spin-orbital."""
    site: Site
    spin: Spin
    dagger: bool

    @property
    def qubit(self) -> int:
        return _ORBITAL_QUBIT[(self.site, self.spin)]


def jw_operator(f: FermionOperator) -> Tuple[WeightedPauliString, WeightedPauliString]:
    """
    Jordan-Wigner image of a fermion operator.

    c_k^dagger = Z_1 ... Z_{k-1} (X_k - i Y_k) / 2 and c_k is its conjugate.

    Returns:
        The (X-part, Y-part) pair whose sum is the encoded operator
    """
    qubit = f.qubit
    prefix: PauliFactors = tuple((q, "Z") for q in range(1, qubit))
    y_weight = -0.5j if f.dagger else 0.5j
    return (
        WeightedPauliString(0.5, prefix + ((qubit, "X"),)),
        WeightedPauliString(y_weight, prefix + ((qubit, "Y"),)),
    )


def build_aim_pauli_hamiltonian(p: AimParameters) -> List[PauliTerm]:
    """
    Qubit Hamiltonian with identity terms dropped.

    H = U/4 Z1Z3 + ((eps0-mu)/2 - U/4)(Z1 + Z3) - (eps1-mu)/2 (Z2 + Z4)
        + V/2 (X1X2 + Y1Y2 + X3X4 + Y3Y4)

    Zero-coefficient terms are omitted.
    """
    z_imp = (p.eps0 - p.mu) / 2.0 - p.u / 4.0
    z_bath = -(p.eps1 - p.mu) / 2.0
    hop = p.v / 2.0
    candidates = [
        PauliTerm(p.u / 4.0, ((1, "Z"), (3, "Z"))),
        PauliTerm(z_imp, ((1, "Z"),)),
        PauliTerm(z_imp, ((3, "Z"),)),
        PauliTerm(z_bath, ((2, "Z"),)),
        PauliTerm(z_bath, ((4, "Z"),)),
        PauliTerm(hop, ((1, "X"), (2, "X"))),
        PauliTerm(hop, ((1, "Y"), (2, "Y"))),
        PauliTerm(hop, ((3, "X"), (4, "X"))),
        PauliTerm(hop, ((3, "Y"), (4, "Y"))),
    ]
    return [term for term in candidates if term.coefficient != 0.0]


def identity_offset(p: AimParameters) -> float:
    """
    Constant dropped from the qubit Hamiltonian.

    Adding it to an eigenvalue of aim_matrix gives the energy of the fermionic
    model U n0up n0dn - (eps0-mu) n0 + (eps1-mu) n1 + V sum(c0^dag c1 + h.c.),
    which is the fermionic form whose encoding has the Z signs above.
    """
    return p.u / 4.0 - (p.eps0 - p.mu) + (p.eps1 - p.mu)


def pauli_matrix(factors: Sequence[Tuple[int, str]], n_qubits: int = N_SYSTEM_QUBITS) -> npt.NDArray[np.complex128]:
    """Dense matrix of a Pauli string under the qubit-1-is-LSB convention."""
    axes = {qubit: axis for qubit, axis in factors}
    for qubit in axes:
        if not 1 <= qubit <= n_qubits:
            raise ModelError(f"Qubit {qubit} outside register of {n_qubits}")
    # kron(P_n, ..., P_1): the most significant qubit comes first
    ordered = [PAULI[axes.get(q, "I")] for q in range(n_qubits, 0, -1)]
    return reduce(np.kron, ordered)


def terms_matrix(terms: Sequence[PauliTerm], n_qubits: int = N_SYSTEM_QUBITS) -> npt.NDArray[np.complex128]:
    dim = 2**n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for term in terms:
        out += term.coefficient * pauli_matrix(term.factors, n_qubits)
    return out


def aim_matrix(p: AimParameters) -> npt.NDArray[np.complex128]:
    """16x16 dense Hamiltonian equal to the sum of build_aim_pauli_hamiltonian terms."""
    return terms_matrix(build_aim_pauli_hamiltonian(p))


def fermion_matrix(f: FermionOperator, n_qubits: int = N_SYSTEM_QUBITS) -> npt.NDArray[np.complex128]:
    x_part, y_part = jw_operator(f)
    return (
        x_part.coefficient * pauli_matrix(x_part.factors, n_qubits)
        + y_part.coefficient * pauli_matrix(y_part.factors, n_qubits)
    )


def occupation_matrix(qubit: int, n_qubits: int = N_SYSTEM_QUBITS) -> npt.NDArray[np.complex128]:
    dim = 2**n_qubits
    return 0.5 * (np.eye(dim) - pauli_matrix(((qubit, "Z"),), n_qubits))


def impurity_occupation_matrix() -> npt.NDArray[np.complex128]:
    return occupation_matrix(1) + occupation_matrix(3)


def total_number_matrix() -> npt.NDArray[np.complex128]:
    return sum(occupation_matrix(q) for q in range(1, N_SYSTEM_QUBITS + 1))


def total_sz_matrix() -> npt.NDArray[np.complex128]:
    up = occupation_matrix(3) + occupation_matrix(4)
    down = occupation_matrix(1) + occupation_matrix(2)
    return 0.5 * (up - down)


def basis_index(occupied: Sequence[int]) -> int:
    """Computational-basis index with the given qubits set to |1>."""
    return sum(1 << (q - 1) for q in occupied)


def paramagnetic_reference_state() -> npt.NDArray[np.complex128]:
    """
    Equal-weight superposition of the two singly-occupied impurity
    configurations with one electron in the bath: (|imp dn, bath up> + |bath dn, imp up>)/sqrt(2).
    """
    state = np.zeros(SYSTEM_DIM, dtype=complex)
    state[basis_index((1, 4))] = 1.0
    state[basis_index((2, 3))] = 1.0
    return state / np.sqrt(2.0)
