"""Pauli-string operator algebra and state vectors.

Basis convention: bit ``i`` of a basis index is qubit ``i`` and a bit value of 1
means sigma^z = +1 on that qubit. Character ``i`` of a Pauli string or bit string
addresses qubit ``i``, so ``"1100"`` is basis index 3.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse

from app.core.config import settings
from app.core.exceptions import CapExceededError, ConfigError, DimensionMismatchError, PhysicsError

PAULI_LABELS = "IXYZ"

# single-qubit products: (a, b) -> (phase, a*b)
_PAULI_PRODUCT: Dict[Tuple[str, str], Tuple[complex, str]] = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}

_DROP_TOLERANCE = 1e-14


@dataclass(frozen=True)
class PauliString:
    n_qubits: int
    factors: str

    def __post_init__(self):
        if self.n_qubits <= 0:
            raise ConfigError(f"n_qubits must be positive, got {self.n_qubits}")
        if len(self.factors) != self.n_qubits:
            raise ConfigError(
                f"Pauli string '{self.factors}' has length {len(self.factors)}, expected {self.n_qubits}"
            )
        bad = set(self.factors) - set(PAULI_LABELS)
        if bad:
            raise ConfigError(f"Pauli string '{self.factors}' contains invalid factors {sorted(bad)}")

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits, "I" * n_qubits)

    @classmethod
    def from_sites(cls, n_qubits: int, sites: Dict[int, str]) -> "PauliString":
        """Build a string from {qubit: factor}, identity elsewhere"""
        factors = ["I"] * n_qubits
        for site, label in sites.items():
            if not 0 <= site < n_qubits:
                raise ConfigError(f"qubit {site} out of range for {n_qubits} qubits")
            factors[site] = label
        return cls(n_qubits, "".join(factors))

    @property
    def x_mask(self) -> int:
        return sum(1 << i for i, f in enumerate(self.factors) if f in "XY")

    @property
    def z_mask(self) -> int:
        return sum(1 << i for i, f in enumerate(self.factors) if f in "ZY")

    @property
    def y_count(self) -> int:
        return self.factors.count("Y")

    @property
    def is_diagonal(self) -> bool:
        return self.x_mask == 0

    def multiply(self, other: "PauliString") -> Tuple[complex, "PauliString"]:
        if other.n_qubits != self.n_qubits:
            raise DimensionMismatchError(
                f"cannot multiply strings on {self.n_qubits} and {other.n_qubits} qubits"
            )
        phase: complex = 1
        factors = []
        for a, b in zip(self.factors, other.factors):
            p, f = _PAULI_PRODUCT[(a, b)]
            phase *= p
            factors.append(f)
        return phase, PauliString(self.n_qubits, "".join(factors))

    def __str__(self) -> str:
        return self.factors


Term = Tuple[float, PauliString]


@dataclass(frozen=True)
class HamiltonianSpec:
    """Real-weighted sum of Pauli strings"""

    n_qubits: int
    terms: Tuple[Term, ...]

    def __post_init__(self):
        if self.n_qubits <= 0:
            raise ConfigError(f"n_qubits must be positive, got {self.n_qubits}")
        for coeff, string in self.terms:
            if string.n_qubits != self.n_qubits:
                raise DimensionMismatchError(
                    f"term '{string}' acts on {string.n_qubits} qubits, spec has {self.n_qubits}"
                )
            if not isinstance(coeff, float):
                raise ConfigError(f"coefficient of '{string}' must be a real float, got {coeff!r}")

    @classmethod
    def from_terms(
        cls, n_qubits: int, terms: Iterable[Tuple[Union[float, complex], Union[str, PauliString]]]
    ) -> "HamiltonianSpec":
        built: List[Term] = []
        for coeff, string in terms:
            if isinstance(coeff, complex):
                if abs(coeff.imag) > _DROP_TOLERANCE:
                    raise ConfigError(f"coefficient {coeff} of '{string}' is not real")
                coeff = coeff.real
            if not isinstance(string, PauliString):
                string = PauliString(n_qubits, string)
            built.append((float(coeff), string))
        return cls(n_qubits, tuple(built))

    @classmethod
    def zero(cls, n_qubits: int) -> "HamiltonianSpec":
        return cls(n_qubits, ())

    @classmethod
    def identity(cls, n_qubits: int, coeff: float = 1.0) -> "HamiltonianSpec":
        return cls(n_qubits, ((float(coeff), PauliString.identity(n_qubits)),))

    @property
    def is_diagonal(self) -> bool:
        return all(string.is_diagonal for _, string in self.terms)

    def canonical(self) -> "HamiltonianSpec":
        return canonicalize(self)

    def __add__(self, other: "HamiltonianSpec") -> "HamiltonianSpec":
        _check_same_size(self.n_qubits, other.n_qubits)
        return HamiltonianSpec(self.n_qubits, self.terms + other.terms)

    def __sub__(self, other: "HamiltonianSpec") -> "HamiltonianSpec":
        return self + (-1.0) * other

    def __neg__(self) -> "HamiltonianSpec":
        return (-1.0) * self

    def __mul__(self, scalar: float) -> "HamiltonianSpec":
        scalar = float(scalar)
        return HamiltonianSpec(self.n_qubits, tuple((scalar * c, s) for c, s in self.terms))

    __rmul__ = __mul__

    def __matmul__(self, other: "HamiltonianSpec") -> "HamiltonianSpec":
        """Symbolic product; the result must be Hermitian after merging"""
        _check_same_size(self.n_qubits, other.n_qubits)
        accumulated: Dict[str, complex] = {}
        for ca, sa in self.terms:
            for cb, sb in other.terms:
                phase, string = sa.multiply(sb)
                accumulated[string.factors] = accumulated.get(string.factors, 0) + ca * cb * phase
        terms = []
        for factors, coeff in accumulated.items():
            if abs(coeff.imag) > 1e-12:
                raise PhysicsError(
                    f"product is not Hermitian: term '{factors}' has imaginary coefficient {coeff.imag:.3e}"
                )
            terms.append((float(coeff.real), PauliString(self.n_qubits, factors)))
        return canonicalize(HamiltonianSpec(self.n_qubits, tuple(terms)))

    def __len__(self) -> int:
        return len(self.terms)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized state on 2**n_qubits basis states"""

    n_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != 2 ** self.n_qubits:
            raise DimensionMismatchError(
                f"state has {amps.size} amplitudes, expected {2 ** self.n_qubits}"
            )
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-10:
            raise ConfigError(f"state is not normalized (norm {norm:.12f})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amplitudes: Sequence[complex], n_qubits: Optional[int] = None) -> "StateVector":
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if n_qubits is None:
            n_qubits = int(round(np.log2(amps.size)))
        norm = np.linalg.norm(amps)
        if norm < 1e-300:
            raise ConfigError("cannot normalize the zero vector")
        return cls(n_qubits, amps / norm)

    @classmethod
    def basis(cls, n_qubits: int, bits: Union[str, int]) -> "StateVector":
        index = bits if isinstance(bits, int) else basis_index(bits)
        if len(str(bits)) != n_qubits and not isinstance(bits, int):
            raise ConfigError(f"bit string '{bits}' does not have {n_qubits} characters")
        amps = np.zeros(2 ** n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def product(cls, labels: str) -> "StateVector":
        """Product state over single-qubit labels 0, 1, + and -"""
        single = {
            "0": np.array([1.0, 0.0], dtype=complex),
            "1": np.array([0.0, 1.0], dtype=complex),
            "+": np.array([1.0, 1.0], dtype=complex) / np.sqrt(2),
            "-": np.array([-1.0, 1.0], dtype=complex) / np.sqrt(2),
        }
        amps = np.ones(1, dtype=complex)
        # qubit i is bit i, so later qubits are more significant
        for label in labels:
            if label not in single:
                raise ConfigError(f"unknown product label '{label}'")
            amps = np.kron(single[label], amps)
        return cls(len(labels), amps)

    @classmethod
    def superpose(cls, states: Sequence["StateVector"], weights: Sequence[complex]) -> "StateVector":
        if len(states) != len(weights) or not states:
            raise ConfigError("superpose needs matching, non-empty state and weight lists")
        n = states[0].n_qubits
        total = np.zeros(2 ** n, dtype=complex)
        for state, weight in zip(states, weights):
            _check_same_size(n, state.n_qubits)
            total = total + weight * state.amplitudes
        return cls.from_amplitudes(total, n)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def overlap(self, other: "StateVector") -> complex:
        _check_same_size(self.n_qubits, other.n_qubits)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.overlap(other)) ** 2

    def weight_on(self, indices: Sequence[int]) -> float:
        return float(np.sum(np.abs(self.amplitudes[np.asarray(indices, dtype=int)]) ** 2))


def _check_same_size(a: int, b: int) -> None:
    if a != b:
        raise DimensionMismatchError(f"qubit count mismatch: {a} vs {b}")


def basis_index(bits: str) -> int:
    if any(b not in "01" for b in bits):
        raise ConfigError(f"'{bits}' is not a bit string")
    return sum(1 << i for i, b in enumerate(bits) if b == "1")


def basis_label(index: int, n_qubits: int) -> str:
    return "".join("1" if (index >> i) & 1 else "0" for i in range(n_qubits))


def canonicalize(h: HamiltonianSpec) -> HamiltonianSpec:
    """Merge duplicate strings, drop vanishing terms, sort by string"""
    merged: Dict[str, float] = {}
    for coeff, string in h.terms:
        merged[string.factors] = merged.get(string.factors, 0.0) + coeff
    terms = tuple(
        (coeff, PauliString(h.n_qubits, factors))
        for factors, coeff in sorted(merged.items())
        if abs(coeff) > _DROP_TOLERANCE
    )
    return HamiltonianSpec(h.n_qubits, terms)


def _term_action(string: PauliString, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Phase and target index for P|b> = phase(b) |b ^ x_mask>"""
    phase = np.full(indices.size, (1j) ** string.y_count, dtype=complex)
    z_mask = string.z_mask
    site = 0
    while z_mask >> site:
        if (z_mask >> site) & 1:
            phase *= np.where((indices >> site) & 1, 1.0, -1.0)
        site += 1
    return phase, indices ^ string.x_mask


def apply(h: HamiltonianSpec, state: Union[StateVector, np.ndarray]) -> np.ndarray:
    """H|psi> term by term, without building a matrix"""
    amps = state.amplitudes if isinstance(state, StateVector) else np.asarray(state, dtype=complex)
    if amps.shape[0] != 2 ** h.n_qubits:
        raise DimensionMismatchError(
            f"spec acts on {h.n_qubits} qubits, state has {amps.shape[0]} amplitudes"
        )
    indices = np.arange(2 ** h.n_qubits)
    out = np.zeros(amps.shape, dtype=complex)
    for coeff, string in h.terms:
        phase, target = _term_action(string, indices)
        # out[target[b]] += c phase[b] amps[b]; target is an involution
        if amps.ndim == 1:
            out += coeff * (phase * amps)[target]
        else:
            out += coeff * (phase[:, None] * amps)[target]
    return out


def expectation(h: HamiltonianSpec, state: StateVector) -> float:
    value = np.vdot(state.amplitudes, apply(h, state))
    if abs(value.imag) > settings.hermiticity_tolerance:
        raise PhysicsError(f"expectation has imaginary part {value.imag:.3e}; spec is not Hermitian")
    return float(value.real)


def diagonal(h: HamiltonianSpec) -> np.ndarray:
    """Diagonal matrix elements <b|H|b>"""
    indices = np.arange(2 ** h.n_qubits)
    diag = np.zeros(indices.size)
    for coeff, string in h.terms:
        if string.is_diagonal:
            phase, _ = _term_action(string, indices)
            diag += coeff * phase.real
    return diag


def to_sparse(h: HamiltonianSpec) -> scipy.sparse.csr_matrix:
    dim = 2 ** h.n_qubits
    indices = np.arange(dim)
    rows, cols, data = [], [], []
    for coeff, string in h.terms:
        phase, target = _term_action(string, indices)
        rows.append(target)
        cols.append(indices)
        data.append(coeff * phase)
    if not data:
        return scipy.sparse.csr_matrix((dim, dim), dtype=complex)
    matrix = scipy.sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    return matrix.tocsr()


def materialize(h: HamiltonianSpec, cap: Optional[int] = None) -> np.ndarray:
    cap = settings.dense_cap if cap is None else cap
    if h.n_qubits > cap:
        raise CapExceededError(f"{h.n_qubits} qubits exceeds the dense cap of {cap}")
    return to_sparse(h).toarray()


def commutator_norm(a: HamiltonianSpec, b: HamiltonianSpec, cap: Optional[int] = None) -> float:
    """Largest element magnitude of AB - BA"""
    _check_same_size(a.n_qubits, b.n_qubits)
    ma = materialize(a, cap)
    mb = materialize(b, cap)
    comm = ma @ mb - mb @ ma
    return float(np.max(np.abs(comm))) if comm.size else 0.0
