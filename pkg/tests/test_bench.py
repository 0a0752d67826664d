import csv
import json

import pytest

from alignprep import run_scaling_bench
from alignprep.bench import BenchReport


@pytest.fixture(scope="module")
def small_report():
    return run_scaling_bench([600, 1200], num_labels=12, buffer_rows=20, seed=3, repeats=1)


class TestScalingBench:
    def test_outputs_agree(self, small_report):
        assert all(case.paths_equal for case in small_report.cases)

    def test_memory_accounting(self, small_report):
        states = 2 * 12 + 1
        for case in small_report.cases:
            assert case.states == states
            assert case.streaming_peak_entries == 2 * states + 20 * states
            assert case.full_peak_entries == case.frames * states

    def test_streaming_peak_flat_oracle_peak_linear(self, small_report):
        first, second = small_report.cases
        assert first.streaming_peak_entries == second.streaming_peak_entries
        assert second.full_peak_entries == 2 * first.full_peak_entries

    def test_wall_times_recorded(self, small_report):
        for case in small_report.cases:
            assert case.streaming_seconds > 0
            assert case.full_seconds > 0

    def test_json_and_csv_reports(self, small_report, tmp_path):
        json_path = tmp_path / "report.json"
        small_report.write_json(json_path)
        data = json.loads(json_path.read_text())
        assert len(data["cases"]) == 2
        assert data["cases"][0]["frames"] == 600

        csv_path = tmp_path / "report.csv"
        small_report.write_csv(csv_path)
        with open(csv_path) as f:
            rows = list(csv.DictReader(f))
        assert [int(r["frames"]) for r in rows] == [600, 1200]

    def test_doubling_ratios(self):
        report = BenchReport(
            cases=(
                type("C", (), {"streaming_seconds": 1.0})(),
                type("C", (), {"streaming_seconds": 2.2})(),
            )
        )
        assert report.doubling_ratios() == [pytest.approx(2.2)]

    def test_frame_floor_enforced(self):
        with pytest.raises(ValueError, match="labels"):
            run_scaling_bench([10], num_labels=50)
