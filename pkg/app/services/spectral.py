"""Fourier analysis of Ramsey series and absolute-energy reconstruction."""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.optimize
import scipy.signal

from app.core import metrics
from app.core.config import settings
from app.core.exceptions import ConfigError, PhysicsError, SimulationError
from app.services.evolution import PropagationSettings
from app.services.models import ModelConfig, apply_penalty
from app.services.operators import diagonal
from app.services.protocol import RamseySeries, TauGrid, build_plan, sweep
from app.services.symmetry import decompose, select_reference
from app.tasks.grid_tasks import evaluate_grid

logger = logging.getLogger(__name__)

MIN_SAMPLES = 4
OMEGA_FLOOR = 0.05
_CHUNK = 512


@dataclass(frozen=True, eq=False)
class Spectrum:
    omega_grid: np.ndarray
    values: np.ndarray
    tau_grid: TauGrid
    mean_subtracted: bool = True
    window: str = "none"

    def __post_init__(self):
        if self.omega_grid.size != self.values.size:
            raise ConfigError(f"{self.values.size} values for {self.omega_grid.size} frequencies")
        if np.any(np.diff(self.omega_grid) <= 0):
            raise ConfigError("frequency grid must be strictly ascending")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def step(self) -> float:
        return float(self.omega_grid[1] - self.omega_grid[0])


@dataclass(frozen=True)
class PeakEstimate:
    omega_raw: float
    omega_refined: float
    magnitude: float
    refinement: str
    uncertainty: float


@dataclass(frozen=True)
class EnergyEstimate:
    omega_refined: float
    energy: float
    matched_level: Optional[int] = None
    matched_energy: Optional[float] = None
    relative_error: Optional[float] = None
    label: str = "unmatched"


@dataclass(frozen=True)
class EnergyReport:
    reference_energy: float
    estimates: Tuple[EnergyEstimate, ...]
    sector: Optional[float] = None
    penalty_shift: float = 0.0

    @property
    def ground_estimate(self) -> EnergyEstimate:
        """Estimate from the largest frequency, i.e. the lowest energy"""
        return min(self.estimates, key=lambda e: e.energy)


@dataclass(frozen=True)
class SectorScanResult:
    sector: float
    status: str
    report: Optional[EnergyReport] = None
    spectrum: Optional[Spectrum] = None
    peaks: Tuple[PeakEstimate, ...] = ()
    classical_energy: Optional[float] = None
    error: Optional[str] = None

    @property
    def lowest_energy(self) -> Optional[float]:
        if self.status == "classical":
            return self.classical_energy
        if self.status == "ok" and self.report.estimates:
            return self.report.ground_estimate.energy
        return None


@dataclass(frozen=True)
class ScanResult:
    sectors: Tuple[SectorScanResult, ...]
    global_sector: float
    global_energy: float


@dataclass(frozen=True, eq=False)
class _ComponentFit:
    omegas: np.ndarray
    raw: np.ndarray
    offset: float
    cos: np.ndarray
    sin: np.ndarray
    residual: np.ndarray

    @property
    def amplitudes(self) -> np.ndarray:
        return np.hypot(self.cos, self.sin)


def _window(kind: str, size: int) -> np.ndarray:
    if kind == "none":
        return np.ones(size)
    if kind == "hann":
        return scipy.signal.windows.hann(size, sym=True)
    raise ConfigError(f"unknown window '{kind}', expected 'none' or 'hann'")


class SpectralAnalyzer:
    def default_omega_grid(
        self,
        series: RamseySeries,
        width_guess: Optional[float] = None,
        oversample: Optional[int] = None,
        omega_max: Optional[float] = None,
    ) -> np.ndarray:
        """Dense grid on [0.05, 1.2 * width], capped at pi / dtau, oversampling the 2 pi / span cell"""
        grid = series.tau_grid
        oversample = oversample or settings.omega_oversample
        nyquist = math.pi / grid.spacing
        if width_guess is not None and width_guess >= nyquist:
            raise PhysicsError(
                f"spectral width {width_guess:.4f} reaches the Nyquist limit pi / dtau = {nyquist:.4f}; "
                f"the tau spacing must be below {math.pi / width_guess:.5f}"
            )
        if omega_max is None:
            width = width_guess if width_guess is not None else nyquist
            omega_max = min(1.2 * width, nyquist)
        elif omega_max > nyquist:
            logger.warning(f"omega_max {omega_max:.4f} is above the Nyquist limit; clamped to {nyquist:.4f}")
            omega_max = nyquist
        if omega_max <= OMEGA_FLOOR:
            raise ConfigError(f"omega_max {omega_max} must exceed {OMEGA_FLOOR}")
        step = 2 * math.pi / grid.span / oversample
        n_omega = int(math.ceil((omega_max - OMEGA_FLOOR) / step)) + 1
        return np.linspace(OMEGA_FLOOR, omega_max, max(n_omega, 2))


    def dft_on_grid(
        self,
        series: RamseySeries,
        omega_grid: np.ndarray,
        mean_subtract: bool = True,
        window: str = "none",
    ) -> Spectrum:
        """f(omega) = sum_n w_n (P_n - mean) exp(-i omega tau_n), evaluated directly"""
        probabilities = np.asarray(series.probabilities, dtype=float)
        if probabilities.size == 0:
            raise ConfigError("cannot transform an empty series")
        if probabilities.size < MIN_SAMPLES:
            raise ConfigError(f"insufficient samples for a spectrum: L = {probabilities.size} < {MIN_SAMPLES}")
        signal = probabilities - probabilities.mean() if mean_subtract else probabilities
        signal = signal * _window(window, signal.size)

        omega_grid = np.asarray(omega_grid, dtype=float)
        values = np.empty(omega_grid.size, dtype=complex)
        for start in range(0, omega_grid.size, _CHUNK):
            chunk = omega_grid[start:start + _CHUNK]
            values[start:start + _CHUNK] = np.exp(-1j * np.outer(chunk, series.taus)) @ signal
        return Spectrum(
            omega_grid=omega_grid,
            values=values,
            tau_grid=series.tau_grid,
            mean_subtracted=mean_subtract,
            window=window,
        )

    def dft(
        self,
        series: RamseySeries,
        omega_min: float,
        omega_max: float,
        n_omega: int,
        mean_subtract: bool = True,
        window: str = "none",
    ) -> Spectrum:
        if n_omega < 2:
            raise ConfigError(f"n_omega must be at least 2, got {n_omega}")
        if not 0 <= omega_min < omega_max:
            raise ConfigError(f"need 0 <= omega_min < omega_max, got [{omega_min}, {omega_max}]")
        return self.dft_on_grid(series, np.linspace(omega_min, omega_max, n_omega), mean_subtract, window)

    def _candidates(self, spectrum: Spectrum, floor_fraction: float, min_separation: float) -> np.ndarray:
        magnitude = spectrum.magnitude
        top = magnitude.max()
        if top <= 0:
            return np.array([], dtype=int)
        distance = max(1, int(math.ceil(min_separation / spectrum.step)))
        indices, _ = scipy.signal.find_peaks(magnitude, height=floor_fraction * top, distance=distance)
        return indices

    def _quadratic(self, spectrum: Spectrum, index: int) -> Tuple[float, float]:
        magnitude = spectrum.magnitude
        omega = spectrum.omega_grid[index]
        if index <= 0 or index >= magnitude.size - 1:
            return float(omega), float(magnitude[index])
        alpha, beta, gamma = magnitude[index - 1], magnitude[index], magnitude[index + 1]
        denom = alpha - 2 * beta + gamma
        if abs(denom) < 1e-300:
            return float(omega), float(beta)
        p = min(0.5, max(-0.5, 0.5 * (alpha - gamma) / denom))
        return float(omega + p * spectrum.step), float(beta - 0.25 * (alpha - gamma) * p)

    def _joint_fit(
        self, series: RamseySeries, omegas: np.ndarray, raw: np.ndarray, cell: float
    ) -> Optional[_ComponentFit]:
        """Fit P = a0 + sum_j b_j cos(w_j tau) + c_j sin(w_j tau), each w_j within a cell of raw_j

        Returns None when the solver stops without converging.
        """
        taus = np.asarray(series.taus, dtype=float)
        data = np.asarray(series.probabilities, dtype=float)
        k = omegas.size
        lower = np.concatenate([raw - cell, np.full(2 * k + 1, -np.inf)])
        upper = np.concatenate([raw + cell, np.full(2 * k + 1, np.inf)])
        omegas = np.clip(omegas, lower[:k] + 1e-12, upper[:k] - 1e-12)

        def design(w):
            phase = np.outer(taus, w)
            return np.hstack([np.ones((taus.size, 1)), np.cos(phase), np.sin(phase)])

        linear, *_ = np.linalg.lstsq(design(omegas), data, rcond=None)
        x0 = np.concatenate([omegas, linear])

        def unpack(x):
            return x[:k], x[k], x[k + 1:2 * k + 1], x[2 * k + 1:]

        def residual(x):
            w, a0, b, c = unpack(x)
            phase = np.outer(taus, w)
            return a0 + np.cos(phase) @ b + np.sin(phase) @ c - data

        def jacobian(x):
            w, _, b, c = unpack(x)
            phase = np.outer(taus, w)
            cos, sin = np.cos(phase), np.sin(phase)
            d_w = taus[:, None] * (-sin * b + cos * c)
            return np.hstack([d_w, np.ones((taus.size, 1)), cos, sin])

        fit = scipy.optimize.least_squares(
            residual, x0, jac=jacobian, bounds=(lower, upper),
            xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=settings.fit_max_nfev,
        )
        if fit.status <= 0:
            logger.warning(f"Joint fit of {k} components did not converge: {fit.message}")
            return None
        w, a0, b, c = unpack(fit.x)
        return _ComponentFit(
            omegas=w.copy(), raw=raw, offset=float(a0), cos=b.copy(), sin=c.copy(), residual=-fit.fun
        )

    def _next_seed(
        self, leftover: Spectrum, fitted: np.ndarray, floor: float, cell: float
    ) -> Optional[Tuple[float, float]]:
        """Strongest residual maximum above floor that is not already a fitted component"""
        indices, _ = scipy.signal.find_peaks(leftover.magnitude, height=floor)
        for i in sorted(indices, key=lambda i: -leftover.magnitude[i]):
            omega, _ = self._quadratic(leftover, int(i))
            if np.min(np.abs(fitted - omega)) >= 0.2 * cell:
                return float(leftover.omega_grid[i]), omega
        return None

    def _extract_components(
        self,
        spectrum: Spectrum,
        series: RamseySeries,
        threshold_fraction: float,
        min_separation: float,
        cell: float,
    ) -> _ComponentFit:
        """Joint fit seeded by the strong peaks, grown one residual maximum at a time down to fit_floor"""
        seeds = self._candidates(spectrum, threshold_fraction, min_separation)
        if not seeds.size:
            raise PhysicsError(f"no spectral peak above {threshold_fraction} of the maximum")
        raw = spectrum.omega_grid[seeds].astype(float)
        start = np.array([self._quadratic(spectrum, int(i))[0] for i in seeds])
        fit = self._joint_fit(series, start, raw, cell)
        if fit is None:
            raise PhysicsError(
                f"least-squares refinement did not converge within {settings.fit_max_nfev} evaluations"
            )

        floor = settings.fit_floor * spectrum.magnitude.max()
        # residual maxima only seed the fit, a quarter-cell grid is enough
        stride = max(1, int(cell / spectrum.step / 4))
        search_grid = spectrum.omega_grid[::stride]
        while fit.omegas.size < settings.fit_max_components:
            leftover = self.dft_on_grid(
                replace(series, probabilities=fit.residual),
                search_grid,
                spectrum.mean_subtracted,
                spectrum.window,
            )
            seed = self._next_seed(leftover, fit.omegas, floor, cell)
            if seed is None:
                break
            seed_raw, seed_omega = seed
            grown = self._joint_fit(
                series, np.append(fit.omegas, seed_omega), np.append(fit.raw, seed_raw), cell
            )
            if grown is None:
                logger.warning(f"Stopped at {fit.omegas.size} components; adding {seed_omega:.6f} broke the fit")
                break
            fit = grown
        logger.debug(f"Joint fit holds {fit.omegas.size} components")
        return fit

    def find_peaks(
        self,
        spectrum: Spectrum,
        series: Optional[RamseySeries] = None,
        threshold_fraction: Optional[float] = None,
        min_separation: Optional[float] = None,
        refine: str = "lsq",
    ) -> List[PeakEstimate]:
        """Spectral components above threshold_fraction of the strongest one

        Quadratic refinement reports grid maxima. Least-squares refinement reports
        the components of a joint fit of the series, thresholded on fitted amplitude.
        """
        threshold_fraction = settings.peak_threshold if threshold_fraction is None else threshold_fraction
        min_separation = settings.peak_min_separation if min_separation is None else min_separation
        if refine not in ("quadratic", "lsq"):
            raise ConfigError(f"unknown refinement '{refine}', expected 'quadratic' or 'lsq'")
        if refine == "lsq" and series is None:
            raise ConfigError("least-squares refinement needs the Ramsey series")

        span = spectrum.tau_grid.span
        cell = 2 * math.pi / span
        peaks = []
        if refine == "quadratic":
            candidates = self._candidates(spectrum, threshold_fraction, min_separation)
            if not candidates.size:
                raise PhysicsError(f"no spectral peak above {threshold_fraction} of the maximum")
            for i in candidates:
                raw = float(spectrum.omega_grid[i])
                omega, magnitude = self._quadratic(spectrum, int(i))
                peaks.append(PeakEstimate(raw, omega, magnitude, refine, 1.0 / span))
        else:
            fit = self._extract_components(spectrum, series, threshold_fraction, min_separation, cell)
            amplitudes = fit.amplitudes
            weight = float(_window(spectrum.window, len(series.taus)).sum())
            for j in np.flatnonzero(amplitudes >= threshold_fraction * amplitudes.max()):
                raw = float(fit.raw[j])
                omega = min(raw + cell, max(raw - cell, float(fit.omegas[j])))
                peaks.append(PeakEstimate(raw, omega, 0.5 * float(amplitudes[j]) * weight, refine, 1.0 / span))

        peaks.sort(key=lambda p: -p.omega_refined)
        metrics.spectral_peaks.inc(len(peaks))
        logger.info(f"Found {len(peaks)} peaks: {', '.join(f'{p.omega_refined:.6f}' for p in peaks)}")
        return peaks

    def reconstruct(
        self,
        peaks: Sequence[PeakEstimate],
        reference_energy: float,
        oracle_levels: Optional[Sequence[float]] = None,
        sector: Optional[float] = None,
        match_tolerance: Optional[float] = None,
        energy_shift: float = 0.0,
    ) -> EnergyReport:
        """E = E_ref - omega + energy_shift per peak, matched to the nearest unused oracle level

        energy_shift undoes a constant penalty offset of the measured sector, so the
        reported energies and the oracle levels are both problem-Hamiltonian energies.
        """
        if not peaks:
            raise ConfigError("no peaks to reconstruct")
        if not math.isfinite(reference_energy):
            raise ConfigError(f"reference energy must be finite, got {reference_energy}")
        for peak in peaks:
            if reference_energy - peak.omega_refined >= reference_energy:
                raise PhysicsError(
                    f"reconstructed energy {reference_energy - peak.omega_refined:.6f} "
                    f"(omega {peak.omega_refined:.6f}) is not below "
                    f"E_ref = {reference_energy:.6f}; the reference is not maximal"
                )
        energies = [reference_energy - p.omega_refined + energy_shift for p in peaks]

        matches = {}
        if oracle_levels is not None:
            levels = np.asarray(oracle_levels, dtype=float)
            pairs = sorted(
                (abs(e - levels[j]), k, j) for k, e in enumerate(energies) for j in range(levels.size)
            )
            used_peaks, used_levels = set(), set()
            for distance, k, j in pairs:
                if k in used_peaks or j in used_levels:
                    continue
                tolerance = match_tolerance if match_tolerance is not None else 2 * math.pi * peaks[k].uncertainty
                if distance > tolerance:
                    continue
                matches[k] = j
                used_peaks.add(k)
                used_levels.add(j)

        estimates = []
        for k, (peak, energy) in enumerate(zip(peaks, energies)):
            if k in matches:
                level_energy = float(oracle_levels[matches[k]])
                error = abs(energy - level_energy) / abs(level_energy) if level_energy != 0 else abs(energy)
                estimates.append(EnergyEstimate(peak.omega_refined, energy, matches[k], level_energy, error, "matched"))
            elif oracle_levels is not None:
                logger.info(f"Peak at omega {peak.omega_refined:.6f} matches no level; labelled as cross-term")
                estimates.append(EnergyEstimate(peak.omega_refined, energy, label="cross-term"))
            else:
                estimates.append(EnergyEstimate(peak.omega_refined, energy))
        return EnergyReport(
            reference_energy=reference_energy,
            estimates=tuple(estimates),
            sector=sector,
            penalty_shift=energy_shift,
        )

    def analyze(
        self,
        series: RamseySeries,
        oracle_levels: Optional[Sequence[float]] = None,
        omega_max: Optional[float] = None,
        oversample: Optional[int] = None,
        window: str = "none",
        refine: str = "lsq",
        threshold_fraction: Optional[float] = None,
    ) -> Tuple[Spectrum, List[PeakEstimate], EnergyReport]:
        """Default grid, transform, peaks and reconstruction for one series"""
        plan = series.plan
        width = plan.reference_energy - float(plan.problem_system.energies[0])
        grid = self.default_omega_grid(series, width_guess=width, oversample=oversample, omega_max=omega_max)
        spectrum = self.dft_on_grid(series, grid, window=window)
        peaks = self.find_peaks(spectrum, series, threshold_fraction=threshold_fraction, refine=refine)
        report = self.reconstruct(
            peaks, plan.reference_energy, oracle_levels,
            sector=plan.ground_sector_q, energy_shift=plan.penalty_shift,
        )
        return spectrum, peaks, report

    def scan_subspaces(
        self,
        model: ModelConfig,
        sector_list: Optional[Sequence[float]],
        T: float,
        tau_grid: TauGrid,
        prop: Optional[PropagationSettings] = None,
        max_workers: Optional[int] = None,
        **analysis,
    ) -> ScanResult:
        """Run the protocol per sector; one-dimensional sectors are evaluated classically

        Energies are compared in the problem-Hamiltonian frame, with each sector's
        penalty offset added back.
        """
        h_p = apply_penalty(model)
        dec = decompose(model.conserved)
        reference = select_reference(
            dec, model.driver, h_p, sector=model.reference_sector, level=model.reference_level
        )
        sector_list = list(sector_list) if sector_list else dec.q_values

        def scan_one(q: float) -> SectorScanResult:
            try:
                sector = dec.sector_for(q)
                if sector.dim == 1:
                    energy = float(diagonal(model.problem)[sector.basis_indices[0]])
                    return SectorScanResult(sector=sector.q_value, status="classical", classical_energy=energy)
                plan = build_plan(
                    model, q, T, tau_grid, prop=prop,
                    reference_sector=reference.q, reference_level=reference.level,
                )
                series = sweep(plan)
                spectrum, peaks, report = self.analyze(
                    series, oracle_levels=plan.problem_system.energies + plan.penalty_shift, **analysis
                )
                return SectorScanResult(
                    sector=sector.q_value, status="ok", report=report, spectrum=spectrum, peaks=tuple(peaks)
                )
            except SimulationError as e:
                logger.warning(f"Sector q = {q} failed: {e}")
                return SectorScanResult(sector=q, status="failed", error=str(e))

        results = evaluate_grid(scan_one, sector_list, max_workers, label="sector")
        ranked = [r for r in results if r.lowest_energy is not None]
        if not ranked:
            raise PhysicsError("every sector of the scan failed")
        best = min(ranked, key=lambda r: r.lowest_energy)
        logger.info(f"Scan minimum: sector q = {best.sector}, energy {best.lowest_energy:.8f}")
        return ScanResult(sectors=tuple(results), global_sector=best.sector, global_energy=best.lowest_energy)


spectral_analyzer = SpectralAnalyzer()
