import json
import re

import pytest

from app.api.schemas import EnergyReportRecord, PeaksDocument, RunMeta
from app.db.result_store import ResultStore
from app.core.config import settings
from app.main import build_parser, main
from tests.conftest import PUBLISHED_GROUND, PUBLISHED_TOLERANCE

FAST = ["--T", "1", "--tau-max", "20", "--L", "256", "--steps-per-unit", "50", "--refine", "quadratic"]


class TestParser:
    def test_subcommands(self):
        parser = build_parser()
        for command in ("sweep", "compare", "scan", "oracle", "prep-ghz"):
            args = parser.parse_args([command, "--model", "m.model"] + (["--runtimes", "20"] if command == "compare" else []))
            assert args.command == command

    def test_model_is_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["sweep"])


class TestOracleCommand:
    def test_writes_tables(self, model_path, tmp_path):
        assert main(["oracle", "--model", str(model_path), "--out", str(tmp_path)]) == 0
        store = ResultStore(tmp_path)
        assert len(store.read_csv("spectrum_exact.csv")) == 16
        assert len(store.read_csv("gaps.csv")) == 16
        sectors = store.read_csv("sectors.csv")
        assert len(sectors) == 16
        assert {row["q"] for row in sectors} == {"-4", "-2", "0", "2", "4"}
        meta = store.read_json("run_meta.json", RunMeta)
        assert meta.command == "oracle"
        assert meta.reference.sector == -4.0
        assert (tmp_path / "metrics.prom").exists()

    def test_missing_model_exits_with_config_error(self, tmp_path):
        assert main(["oracle", "--model", str(tmp_path / "absent.model"), "--out", str(tmp_path)]) == 1

    def test_penalized_model_reports_problem_energies(self, penalty_model_path, tmp_path):
        assert main(["oracle", "--model", str(penalty_model_path), "--out", str(tmp_path)]) == 0
        store = ResultStore(tmp_path)
        ground = float(store.read_csv("spectrum_exact.csv")[0]["energy"])
        assert ground == pytest.approx(PUBLISHED_GROUND, abs=PUBLISHED_TOLERANCE)
        sectors = store.read_csv("sectors.csv")
        assert sectors[0]["q"] == "0"
        # measured frequency of the ground carries the sector-0 offset lambda (0 + 4)^2 = 8
        gaps = {int(row["level"]): float(row["gap"]) for row in store.read_csv("gaps.csv")}
        reference = store.read_json("run_meta.json", RunMeta).reference
        assert gaps[0] == pytest.approx(reference.energy_problem - (ground - 8.0), abs=1e-6)

    def test_run_meta_records_tunable_settings(self, model_path, tmp_path, monkeypatch):
        monkeypatch.setattr(settings, "peak_threshold", 0.07)
        assert main(["oracle", "--model", str(model_path), "--out", str(tmp_path)]) == 0
        meta = ResultStore(tmp_path).read_json("run_meta.json", RunMeta)
        assert meta.settings["peak_threshold"] == 0.07
        for name in ("peak_min_separation", "fit_floor", "norm_tolerance", "propagation_method"):
            assert name in meta.settings
        assert "log_level" not in meta.settings
        assert any("level 15" in note for note in meta.notes)


class TestSweepCommand:
    def test_outputs(self, model_path, tmp_path):
        assert main(["sweep", "--model", str(model_path), "--out", str(tmp_path)] + FAST) == 0
        store = ResultStore(tmp_path)
        ramsey = store.read_csv("ramsey.csv")
        assert len(ramsey) == 256
        assert ramsey[0]["n"] == "1"
        assert float(ramsey[-1]["tau"]) == 20.0
        assert list(store.read_csv("spectrum.csv")[0]) == ["omega", "re", "im", "abs"]
        assert store.read_json("peaks.json", PeaksDocument).peaks
        report = store.read_json("energies.json", EnergyReportRecord)
        assert all(e.energy < report.reference_energy for e in report.estimates)
        meta = json.loads((tmp_path / "run_meta.json").read_text())
        assert meta["mode"] == "exact"
        assert meta["config"]["L"] == 256

    def test_degenerate_grid_refused(self, model_path, tmp_path):
        assert main(["sweep", "--model", str(model_path), "--out", str(tmp_path), "--L", "2"]) == 1
        assert not (tmp_path / "ramsey.csv").exists()

    def test_sampled_mode_is_byte_identical(self, model_path, tmp_path):
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / run
            args = ["sweep", "--model", str(model_path), "--out", str(out), "--shots", "100", "--seed", "7"] + FAST
            assert main(args) == 0
            outputs.append((out / "ramsey.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_invalid_config(self, model_path, tmp_path):
        args = ["sweep", "--model", str(model_path), "--out", str(tmp_path), "--tau-min", "5", "--tau-max", "1"]
        assert main(args) == 1

    def test_undersampled_grid_refused(self, model_path, tmp_path):
        # dtau = 20 / 63 puts pi / dtau below the 10.8 ground frequency
        args = ["sweep", "--model", str(model_path), "--out", str(tmp_path), "--T", "1", "--tau-max", "20", "--L", "64"]
        assert main(args) == 2


class TestCompareCommand:
    def test_empty_runtime_list(self, model_path, tmp_path):
        assert main(["compare", "--model", str(model_path), "--out", str(tmp_path), "--runtimes", ""]) == 1

    def test_runtime_too_short_for_ramps(self, model_path, tmp_path):
        args = ["compare", "--model", str(model_path), "--out", str(tmp_path), "--runtimes", "1.5"] + FAST
        assert main(args) == 1

    def test_table(self, model_path, tmp_path):
        args = ["compare", "--model", str(model_path), "--out", str(tmp_path), "--runtimes", "8,4"] + FAST
        assert main(args) == 0
        rows = ResultStore(tmp_path).read_csv("compare.csv")
        assert [float(row["total_runtime"]) for row in rows] == [4.0, 8.0]
        assert len({row["exact"] for row in rows}) == 1
        meta = ResultStore(tmp_path).read_json("run_meta.json", RunMeta)
        assert any("T_conv = R" in note for note in meta.notes)
        sizes = [int(m.group(1)) for note in meta.notes for m in [re.search(r"L = (\d+),", note)] if m]
        assert len(sizes) == 2
        assert sizes[0] < sizes[1]
        assert any("P_adiabatic" in note for note in meta.notes)


@pytest.mark.slow
class TestLongRunningCommands:
    def test_scan(self, model_path, tmp_path):
        args = ["scan", "--model", str(model_path), "--out", str(tmp_path), "--sectors=-2,0,4"] + FAST
        assert main(args) == 0
        document = json.loads((tmp_path / "global_minimum.json").read_text())
        assert document["sector"] == 0.0
        assert {entry["status"] for entry in document["sectors"]} <= {"ok", "classical"}
        assert (tmp_path / "spectrum_qp0.csv").exists()
        assert (tmp_path / "spectrum_qm2.csv").exists()

    def test_prep_ghz(self, model_path, tmp_path):
        assert main(["prep-ghz", "--model", str(model_path), "--out", str(tmp_path), "--steps-per-unit", "50"]) == 0
        diagnostics = json.loads((tmp_path / "prep_diag.json").read_text())
        assert diagnostics["pattern_ground"] == "++--"
        assert diagnostics["pattern_reference"] == "----"
        assert diagnostics["population_ground"] >= 0.45

    def test_robust_against_short_ramps(self, model_path, tmp_path):
        args = ["compare", "--model", str(model_path), "--out", str(tmp_path), "--runtimes", "80,400"]
        assert main(args) == 0
        short, long = ResultStore(tmp_path).read_csv("compare.csv")
        exact = float(short["exact"])
        proposed, conventional = float(short["proposed_estimate"]), float(short["conventional_estimate"])
        assert abs(proposed - exact) <= 1e-2
        assert abs(proposed - exact) < abs(conventional - exact)
        assert abs(float(long["proposed_estimate"]) - exact) <= 1e-3
        assert abs(float(long["conventional_estimate"]) - exact) <= 1e-3
