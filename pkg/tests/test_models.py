import json

import numpy as np
import pytest

from app.core.exceptions import ConfigError, ModelFileError
from app.services.models import (
    DriverParams,
    HeisenbergParams,
    apply_penalty,
    benchmark_driver_params,
    benchmark_problem_params,
    build_driver,
    build_ghz_hamiltonians,
    build_heisenberg,
    build_penalty,
    build_total_magnetization,
    load_model_file,
    parse_model_file,
    penalty_shift,
)
from app.services.operators import StateVector, commutator_norm, diagonal, expectation, materialize
from app.services.oracle import exact_oracle
from tests.conftest import PUBLISHED_GROUND, PUBLISHED_TOLERANCE, term_listing


def model_text(**overrides) -> str:
    doc = {
        "n_qubits": 4,
        "problem": {
            "builtin": "heisenberg",
            "params": {"J": 1.0, "B_prime": [-0.24, -0.34, -0.62, -0.09], "boundary": "open"},
        },
        "driver": {"builtin": "xy_driver", "params": {"J_pair": [0.5, 0.3], "B": [-1.0, -1.0, 1.0, 1.0]}},
        "conserved": {"builtin": "total_magnetization"},
    }
    doc.update(overrides)
    return json.dumps(doc, indent=2)


class TestHeisenberg:
    def test_periodic_term_count(self):
        assert len(build_heisenberg(benchmark_problem_params("periodic"))) == 16

    def test_open_term_count(self):
        assert len(build_heisenberg(benchmark_problem_params("open"))) == 13

    def test_zero_coupling_is_pure_field(self):
        h = build_heisenberg(HeisenbergParams(2, 0.0, (0.3, 0.7)))
        energies = np.linalg.eigvalsh(materialize(h))
        np.testing.assert_allclose(energies, sorted([s1 * 0.3 + s2 * 0.7 for s1 in (-1, 1) for s2 in (-1, 1)]))

    def test_ground_energy_near_published(self):
        h = build_heisenberg(benchmark_problem_params("open"))
        assert exact_oracle.exact_diagonalize(h).ground_energy == pytest.approx(PUBLISHED_GROUND, abs=PUBLISHED_TOLERANCE)

    @pytest.mark.xfail(strict=False, reason="published fields are rounded to two decimals")
    def test_ground_energy_published_precision(self):
        h = build_heisenberg(benchmark_problem_params("open"))
        assert exact_oracle.exact_diagonalize(h).ground_energy == pytest.approx(PUBLISHED_GROUND, abs=1e-5)

    def test_reference_energy_of_all_down_state(self):
        h = build_heisenberg(benchmark_problem_params("open"))
        assert diagonal(h)[0] == pytest.approx(3.0 + 1.29)

    def test_deterministic(self):
        a = build_heisenberg(benchmark_problem_params("open"))
        b = build_heisenberg(benchmark_problem_params("open"))
        assert term_listing(a) == term_listing(b)

    def test_rejects_wrong_field_count(self):
        with pytest.raises(ConfigError):
            HeisenbergParams(4, 1.0, (0.1, 0.2))

    def test_rejects_unknown_boundary(self):
        with pytest.raises(ConfigError):
            HeisenbergParams(2, 1.0, (0.1, 0.2), boundary="twisted")


class TestDriver:
    def test_ground_state_is_1100(self):
        h = build_driver(benchmark_driver_params())
        spectrum = exact_oracle.exact_diagonalize(h)
        assert spectrum.ground_energy == pytest.approx(-4.0)
        assert spectrum.energies[1] > -4.0 + 1e-6
        assert expectation(h, StateVector.basis(4, "1100")) == pytest.approx(-4.0)

    def test_zero_coupling_is_diagonal(self):
        h = build_driver(DriverParams(2, (0.0,), (1.0, -2.0)))
        matrix = materialize(h)
        np.testing.assert_allclose(matrix, np.diag(np.diag(matrix)))

    def test_pair_block_spectrum(self):
        h = build_driver(DriverParams(2, (0.5,), (-1.0, 0.4)))
        b_a, b_b, j = -1.0, 0.4, 0.5
        expected = sorted([
            b_a + b_b,
            -(b_a + b_b),
            np.sqrt((b_a - b_b) ** 2 + 4 * j ** 2),
            -np.sqrt((b_a - b_b) ** 2 + 4 * j ** 2),
        ])
        np.testing.assert_allclose(np.linalg.eigvalsh(materialize(h)), expected, atol=1e-12)

    def test_odd_qubit_count_rejected(self):
        with pytest.raises(ConfigError):
            DriverParams(3, (0.5,), (1.0, 1.0, 1.0))


class TestPenalty:
    def test_two_qubit_expansion(self):
        penalty = build_penalty(build_total_magnetization(2), 0.0, 1.0)
        assert term_listing(penalty) == [(-2.0, "II"), (-2.0, "ZZ")]

    def test_matches_dense_square(self):
        q = build_total_magnetization(3)
        dense_q = materialize(q)
        shifted = dense_q - 1.0 * np.eye(8)
        np.testing.assert_allclose(materialize(build_penalty(q, 1.0, 0.5)), -0.5 * shifted @ shifted, atol=1e-12)

    def test_lambda_must_be_positive(self):
        with pytest.raises(ConfigError):
            build_penalty(build_total_magnetization(2), 0.0, 0.0)

    def test_term_budget(self, monkeypatch):
        from app.core.config import settings

        monkeypatch.setattr(settings, "penalty_term_budget", 4)
        with pytest.raises(ConfigError):
            build_penalty(build_total_magnetization(4), 0.0, 1.0)


class TestGhzHamiltonians:
    def test_squared_sum(self):
        _, h2, _, _, _ = build_ghz_hamiltonians(2)
        assert term_listing(h2) == [(-2.0, "II"), (-2.0, "ZZ")]

    def test_field_pattern(self):
        *_, h4, transverse = build_ghz_hamiltonians(2, B_vec=[0.5, -1.5])
        assert term_listing(h4) == [(-1.5, "IX"), (0.5, "XI")]
        assert term_listing(transverse) == term_listing(h4)

    def test_h3_and_h4_commute(self):
        _, _, h3, h4, _ = build_ghz_hamiltonians(4, B_vec=[-1.0, -1.0, 1.0, 1.0])
        assert commutator_norm(h3, h4) <= 1e-12

    def test_odd_register_rejected(self):
        with pytest.raises(ConfigError):
            build_ghz_hamiltonians(3)


class TestModelFile:
    def test_builtin_configuration(self, benchmark_model):
        model = parse_model_file(model_text())
        assert term_listing(model.problem) == term_listing(benchmark_model.problem)
        assert term_listing(model.driver) == term_listing(benchmark_model.driver)
        assert model.driver_params == benchmark_driver_params()

    def test_shipped_file(self, model_path, benchmark_model):
        model = load_model_file(model_path)
        assert model.n_qubits == 4
        assert model.provenance["source"] == str(model_path)
        assert term_listing(model.problem) == term_listing(benchmark_model.problem)

    def test_explicit_terms(self):
        model = parse_model_file(json.dumps({
            "n_qubits": 2,
            "problem": {"terms": [[1.0, "XX"], [1.0, "YY"], [0.5, "ZZ"]]},
            "driver": {"terms": [[1.0, "ZI"], [-1.0, "IZ"]]},
            "conserved": {"terms": [[1.0, "ZI"], [1.0, "IZ"]]},
        }))
        assert len(model.problem) == 3
        assert model.label == "custom"

    def test_empty_terms_rejected(self):
        with pytest.raises(ModelFileError):
            parse_model_file(model_text(problem={"terms": []}))

    def test_non_commuting_conserved_quantity_rejected(self):
        conserved = {"terms": [[1.0, "XIII"], [1.0, "IXII"], [1.0, "IIXI"], [1.0, "IIIX"]]}
        with pytest.raises(ModelFileError, match="does not commute"):
            parse_model_file(model_text(conserved=conserved))

    def test_syntax_error_reports_position(self):
        with pytest.raises(ModelFileError) as info:
            parse_model_file('{\n  "n_qubits": 4,\n  "problem": \n}')
        assert info.value.line == 4

    def test_unknown_key_rejected(self):
        with pytest.raises(ModelFileError):
            parse_model_file(model_text(shots=10))

    def test_unknown_builtin_parameter_rejected(self):
        problem = {"builtin": "heisenberg", "params": {"J": 1.0, "B_prime": [0, 0, 0, 0], "chi": 2}}
        with pytest.raises(ModelFileError, match="unknown parameters"):
            parse_model_file(model_text(problem=problem))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_model_file(tmp_path / "absent.model")

    def test_penalty_block(self, penalty_model_path):
        model = load_model_file(penalty_model_path)
        assert model.penalty.lam == 0.5
        assert model.penalty.q_target == -4.0
        assert model.reference_sector == -4.0
        effective = diagonal(apply_penalty(model))
        # sector q = -4 is untouched, q = -2 drops by lambda * 4
        assert effective[0] == pytest.approx(diagonal(model.problem)[0])
        assert effective[1] == pytest.approx(diagonal(model.problem)[1] - 2.0)

    def test_penalty_shift_undoes_sector_offset(self, penalty_model_path):
        model = load_model_file(penalty_model_path)
        effective = diagonal(apply_penalty(model))
        bare = diagonal(model.problem)
        magnetization = diagonal(model.conserved)
        for q, shift in ((-4.0, 0.0), (-2.0, 2.0), (0.0, 8.0), (2.0, 18.0), (4.0, 32.0)):
            assert penalty_shift(model, q) == pytest.approx(shift)
            members = np.isclose(magnetization, q)
            np.testing.assert_allclose(effective[members] + shift, bare[members], atol=1e-12)

    def test_no_penalty_no_shift(self, benchmark_model):
        assert penalty_shift(benchmark_model, 2.0) == 0.0
