import numpy as np
import pytest

from app.core.exceptions import PhysicsError
from app.services.models import apply_penalty, load_model_file, penalty_shift
from app.services.oracle import exact_oracle
from app.services.symmetry import decompose, select_reference
from tests.conftest import PUBLISHED_EXCITED, PUBLISHED_GROUND, PUBLISHED_TOLERANCE


class TestExactDiagonalize:
    def test_sixteen_levels(self, benchmark_model):
        spectrum = exact_oracle.exact_diagonalize(benchmark_model.problem)
        assert spectrum.energies.shape == (16,)
        assert np.all(np.diff(spectrum.energies) >= 0)

    def test_published_levels(self, benchmark_model):
        spectrum = exact_oracle.exact_diagonalize(benchmark_model.problem)
        assert spectrum.ground_energy == pytest.approx(PUBLISHED_GROUND, abs=PUBLISHED_TOLERANCE)
        for published in PUBLISHED_EXCITED:
            assert np.min(np.abs(spectrum.energies - published)) <= PUBLISHED_TOLERANCE

    def test_width(self, benchmark_model):
        spectrum = exact_oracle.exact_diagonalize(benchmark_model.problem)
        assert spectrum.width == pytest.approx(spectrum.energies[-1] - spectrum.energies[0])


class TestGapTable:
    def test_gaps_from_maximum_are_nonnegative(self, benchmark_model):
        spectrum = exact_oracle.exact_diagonalize(benchmark_model.problem)
        gaps = exact_oracle.gap_table(spectrum, spectrum.energies[-1])
        assert all(gap >= -1e-12 for _, gap in gaps)
        assert gaps[0][0] == 0
        assert [gap for _, gap in gaps] == sorted((gap for _, gap in gaps), reverse=True)

    def test_ground_gap_against_reference(self, benchmark_model):
        dec = decompose(benchmark_model.conserved)
        reference = select_reference(dec, benchmark_model.driver, benchmark_model.problem)
        spectrum = exact_oracle.exact_diagonalize(benchmark_model.problem)
        level, gap = exact_oracle.gap_table(spectrum, reference.energy_problem)[0]
        assert level == 0
        assert gap == pytest.approx(10.8, abs=PUBLISHED_TOLERANCE)

    def test_level_shifts_restore_measured_frame(self, penalty_model_path):
        model = load_model_file(penalty_model_path)
        h_p = apply_penalty(model)
        spectrum = exact_oracle.exact_diagonalize(model.problem)
        rows = exact_oracle.sector_resolved_levels(model.problem, model.conserved)
        shifts = [penalty_shift(model, row.q) for row in rows]
        top = exact_oracle.exact_diagonalize(h_p).energies[-1]
        gaps = dict(exact_oracle.gap_table(spectrum, top, level_shifts=shifts))
        penalized = exact_oracle.exact_diagonalize(h_p).energies
        # every measured frequency is a gap of the penalized spectrum
        for level, gap in gaps.items():
            assert np.min(np.abs(penalized - (top - gap))) <= 1e-9
        assert gaps[0] == pytest.approx(top - (spectrum.energies[0] - 8.0), abs=1e-9)

    def test_level_shifts_must_cover_spectrum(self, benchmark_model):
        spectrum = exact_oracle.exact_diagonalize(benchmark_model.problem)
        with pytest.raises(PhysicsError):
            exact_oracle.gap_table(spectrum, 4.29, level_shifts=[0.0])


class TestSectorResolvedLevels:
    def test_levels_carry_sectors(self, benchmark_model):
        rows = exact_oracle.sector_resolved_levels(benchmark_model.problem, benchmark_model.conserved)
        spectrum = exact_oracle.exact_diagonalize(benchmark_model.problem)
        np.testing.assert_allclose([row.energy for row in rows], spectrum.energies, atol=1e-10)
        counts = {q: sum(1 for row in rows if row.q == q) for q in (-4.0, -2.0, 0.0, 2.0, 4.0)}
        assert counts == {-4.0: 1, -2.0: 4, 0.0: 6, 2.0: 4, 4.0: 1}
        assert rows[0].q == 0.0
        assert rows[0].sector_level == 0

    def test_level_index(self, benchmark_model):
        spectrum = exact_oracle.exact_diagonalize(benchmark_model.problem)
        assert exact_oracle.level_index(spectrum, spectrum.energies[3] + 1e-6) == 3
