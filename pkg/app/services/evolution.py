"""Time-dependent propagation under H(t) = F(t) H_D + (1 - F(t)) H_P."""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from app.core import metrics
from app.core.config import settings
from app.core.exceptions import ConfigError, DimensionMismatchError, PhysicsError
from app.services.operators import HamiltonianSpec, StateVector, materialize, to_sparse

logger = logging.getLogger(__name__)

METHODS = ("magnus4", "midpoint", "rk4")

_GAUSS_OFFSET = math.sqrt(3.0) / 6.0


@dataclass(frozen=True)
class Schedule:
    """Forward ramp on [0, T], hold on [T, T+tau], reverse ramp on [T+tau, 2T+tau]"""

    T: float
    tau: float = 0.0

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError(f"schedule duration T must be positive, got {self.T}")
        if self.tau < 0:
            raise ConfigError(f"tau must be nonnegative, got {self.tau}")

    @property
    def end(self) -> float:
        return 2 * self.T + self.tau

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return (0.0, self.T, self.T + self.tau, self.end)

    def value(self, t: float) -> float:
        return schedule_value(self, t)

    def is_static(self, t0: float, t1: float) -> bool:
        return t0 >= self.T and t1 <= self.T + self.tau


@dataclass(frozen=True)
class RampSchedule:
    """Single linear ramp F(t) = 1 - t/duration"""

    duration: float

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError(f"ramp duration must be positive, got {self.duration}")

    @property
    def end(self) -> float:
        return self.duration

    @property
    def breakpoints(self) -> Tuple[float, ...]:
        return (0.0, self.duration)

    def value(self, t: float) -> float:
        _check_time(t, self.end)
        if t >= self.duration:
            return 0.0
        return 1.0 - t / self.duration

    def is_static(self, t0: float, t1: float) -> bool:
        return False


AnySchedule = Union[Schedule, RampSchedule]


def ramp_schedule(T_conv: float) -> RampSchedule:
    return RampSchedule(T_conv)


@dataclass(frozen=True)
class PropagationSettings:
    steps_per_unit_time: int = field(default_factory=lambda: settings.steps_per_unit_time)
    method: str = field(default_factory=lambda: settings.propagation_method)
    norm_tolerance: float = field(default_factory=lambda: settings.norm_tolerance)

    def __post_init__(self):
        if self.steps_per_unit_time <= 0:
            raise ConfigError(f"steps_per_unit_time must be positive, got {self.steps_per_unit_time}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown propagation method '{self.method}', expected one of {METHODS}")
        if not self.norm_tolerance > 0:
            raise ConfigError(f"norm_tolerance must be positive, got {self.norm_tolerance}")


def _check_time(t: float, end: float) -> None:
    slack = 1e-12 * max(1.0, end)
    if t < -slack or t > end + slack:
        raise ConfigError(f"time {t} outside the schedule domain [0, {end}]")


def schedule_value(s: Schedule, t: float) -> float:
    _check_time(t, s.end)
    if t <= 0:
        return 1.0
    if t < s.T:
        return 1.0 - t / s.T
    if t <= s.T + s.tau:
        return 0.0
    if t >= s.end:
        return 1.0
    return (t - s.T - s.tau) / s.T


class StaticEvolver:
    """Exact e^{-iH tau} from a cached eigendecomposition"""

    def __init__(self, energies: np.ndarray, vectors: np.ndarray):
        self.energies = np.asarray(energies, dtype=float)
        self.vectors = np.asarray(vectors, dtype=complex)

    @classmethod
    def for_matrix(cls, matrix: np.ndarray) -> "StaticEvolver":
        energies, vectors = np.linalg.eigh(matrix)
        return cls(energies, vectors)

    @classmethod
    def for_hamiltonian(cls, h: HamiltonianSpec) -> "StaticEvolver":
        return cls.for_matrix(materialize(h))

    def unitary(self, tau: float) -> np.ndarray:
        return (self.vectors * np.exp(-1j * self.energies * tau)) @ self.vectors.conj().T

    def evolve_amplitudes(self, amps: np.ndarray, tau: float) -> np.ndarray:
        return self.vectors @ (np.exp(-1j * self.energies * tau) * (self.vectors.conj().T @ amps))

    def evolve(self, psi: StateVector, tau: float) -> StateVector:
        if psi.dim != self.vectors.shape[0]:
            raise DimensionMismatchError(f"state has {psi.dim} amplitudes, evolver {self.vectors.shape[0]}")
        return StateVector.from_amplitudes(self.evolve_amplitudes(psi.amplitudes, tau), psi.n_qubits)


def evolve_static(h: HamiltonianSpec, psi: StateVector, tau: float) -> StateVector:
    if h.n_qubits != psi.n_qubits:
        raise DimensionMismatchError(f"spec acts on {h.n_qubits} qubits, state on {psi.n_qubits}")
    if tau == 0:
        return psi
    if h.n_qubits <= settings.dense_cap:
        return StaticEvolver.for_hamiltonian(h).evolve(psi, tau)
    out = scipy.sparse.linalg.expm_multiply(-1j * tau * to_sparse(h).tocsc(), psi.amplitudes)
    return StateVector.from_amplitudes(out, psi.n_qubits)


class DrivenSystem:
    """H(F) = F H_D + (1 - F) H_P with matrices built once"""

    def __init__(self, h_d: HamiltonianSpec, h_p: HamiltonianSpec, prop: Optional[PropagationSettings] = None):
        if h_d.n_qubits != h_p.n_qubits:
            raise DimensionMismatchError(f"driver on {h_d.n_qubits} qubits, problem on {h_p.n_qubits}")
        self.n_qubits = h_d.n_qubits
        self.prop = prop or PropagationSettings()
        self.method = self.prop.method
        if self.method != "rk4" and self.n_qubits > settings.dense_cap:
            logger.info(f"{self.n_qubits} qubits exceeds the dense cap; falling back to rk4")
            self.method = "rk4"
        if self.method == "rk4":
            self._hp = to_sparse(h_p)
            self._delta = to_sparse(h_d) - self._hp
        else:
            self._hp = materialize(h_p)
            self._delta = materialize(h_d) - self._hp
        self._static = {}

    def matrix(self, f: float):
        return self._hp + f * self._delta

    def _static_evolver(self, f: float) -> StaticEvolver:
        if f not in self._static:
            m = self.matrix(f)
            self._static[f] = StaticEvolver.for_matrix(m.toarray() if scipy.sparse.issparse(m) else m)
        return self._static[f]

    def _segments(self, schedule: AnySchedule, t0: float, t1: float) -> Iterator[Tuple[float, float]]:
        cuts = [t0] + [b for b in schedule.breakpoints if t0 < b < t1] + [t1]
        for a, b in zip(cuts[:-1], cuts[1:]):
            if b > a:
                yield a, b

    def _n_steps(self, a: float, b: float) -> int:
        return max(1, int(math.ceil((b - a) * self.prop.steps_per_unit_time - 1e-9)))

    def _step_unitaries(self, schedule: AnySchedule, a: float, b: float) -> Iterator[np.ndarray]:
        n = self._n_steps(a, b)
        h = (b - a) / n
        for k in range(n):
            t = a + k * h
            if self.method == "midpoint":
                yield scipy.linalg.expm(-1j * h * self.matrix(schedule.value(t + 0.5 * h)))
            else:
                h1 = self.matrix(schedule.value(t + h * (0.5 - _GAUSS_OFFSET)))
                h2 = self.matrix(schedule.value(t + h * (0.5 + _GAUSS_OFFSET)))
                omega = -0.5j * h * (h1 + h2) - (math.sqrt(3.0) / 12.0) * h * h * (h2 @ h1 - h1 @ h2)
                yield scipy.linalg.expm(omega)
        metrics.propagation_steps.labels(method=self.method).inc(n)

    def _rk4(self, schedule: AnySchedule, a: float, b: float, amps: np.ndarray) -> np.ndarray:
        n = self._n_steps(a, b)
        h = (b - a) / n

        def rhs(t, y):
            return -1j * (self.matrix(schedule.value(t)) @ y)

        y = amps
        for k in range(n):
            t = a + k * h
            k1 = rhs(t, y)
            k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = rhs(t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        metrics.propagation_steps.labels(method="rk4").inc(n)
        return y

    def _check_range(self, schedule: AnySchedule, t0: float, t1: float) -> None:
        _check_time(t0, schedule.end)
        _check_time(t1, schedule.end)
        if t0 > t1:
            raise ConfigError(f"propagation interval is reversed: t0 = {t0} > t1 = {t1}")

    def propagate_amplitudes(self, schedule: AnySchedule, t0: float, t1: float, amps: np.ndarray) -> np.ndarray:
        self._check_range(schedule, t0, t1)
        amps = np.asarray(amps, dtype=complex)
        for a, b in self._segments(schedule, t0, t1):
            if schedule.is_static(a, b):
                amps = self._static_evolver(schedule.value(a)).evolve_amplitudes(amps, b - a)
            elif self.method == "rk4":
                amps = self._rk4(schedule, a, b, amps)
            else:
                for u in self._step_unitaries(schedule, a, b):
                    amps = u @ amps
        return amps

    def propagate(self, schedule: AnySchedule, t0: float, t1: float, psi: StateVector) -> StateVector:
        if psi.n_qubits != self.n_qubits:
            raise DimensionMismatchError(f"state on {psi.n_qubits} qubits, Hamiltonians on {self.n_qubits}")
        out = self.propagate_amplitudes(schedule, t0, t1, psi.amplitudes)
        drift = abs(np.linalg.norm(out) - 1.0)
        if drift > self.prop.norm_tolerance:
            raise PhysicsError(
                f"norm drift {drift:.3e} exceeds {self.prop.norm_tolerance:.1e} "
                f"({self.method}, {self.prop.steps_per_unit_time} steps per unit time); refine the step"
            )
        if drift > 0:
            logger.debug(f"Renormalizing after propagation (drift {drift:.3e})")
        return StateVector.from_amplitudes(out, psi.n_qubits)

    def propagator(self, schedule: AnySchedule, t0: float, t1: float) -> np.ndarray:
        """Dense unitary of the segment [t0, t1]"""
        self._check_range(schedule, t0, t1)
        dim = 2 ** self.n_qubits
        if self.method == "rk4":
            return self.propagate_amplitudes(schedule, t0, t1, np.eye(dim, dtype=complex))
        total = np.eye(dim, dtype=complex)
        for a, b in self._segments(schedule, t0, t1):
            if schedule.is_static(a, b):
                total = self._static_evolver(schedule.value(a)).unitary(b - a) @ total
            else:
                for u in self._step_unitaries(schedule, a, b):
                    total = u @ total
        return total


def propagate(
    h_d: HamiltonianSpec,
    h_p: HamiltonianSpec,
    schedule: AnySchedule,
    t0: float,
    t1: float,
    psi: StateVector,
    prop: Optional[PropagationSettings] = None,
) -> StateVector:
    return DrivenSystem(h_d, h_p, prop).propagate(schedule, t0, t1, psi)


def propagator(
    h_d: HamiltonianSpec,
    h_p: HamiltonianSpec,
    schedule: AnySchedule,
    t0: float,
    t1: float,
    prop: Optional[PropagationSettings] = None,
) -> np.ndarray:
    return DrivenSystem(h_d, h_p, prop).propagator(schedule, t0, t1)


def interpolate(
    h_a: HamiltonianSpec,
    h_b: HamiltonianSpec,
    duration: float,
    psi: StateVector,
    prop: Optional[PropagationSettings] = None,
) -> StateVector:
    """Linear ramp from h_a to h_b over the given duration"""
    return propagate(h_a, h_b, RampSchedule(duration), 0.0, duration, psi, prop)
