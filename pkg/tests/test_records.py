"""Tests for results CSV files and summaries."""

import math

import pytest

from vqaopt.constants import BELL_COLUMNS, CSV_COLUMNS
from vqaopt.errors import ResultsFormatError
from vqaopt.records import (TrialRecord, failure_record, format_value,
                            read_results_csv, summarize, write_bell_csv,
                            write_results_csv)


def record(**overrides) -> TrialRecord:
    values = dict(experiment="ground_state", method="GRAD", n_qubits=4, L=4, T=2, lr=0.1,
                  sigma=None, noise_lambda=0.0, seed=0, epoch=0, cost=0.0)
    values.update(overrides)
    return TrialRecord(**values)


class TestFormatting:
    """Cell formatting."""

    def test_missing_values_are_nan(self):
        assert format_value(None) == "nan"

    def test_floats_keep_full_precision(self):
        assert format_value(0.1 + 0.2) == "0.30000000000000004"
        assert float(format_value(math.pi / 24)) == math.pi / 24

    def test_row_has_every_column(self):
        row = record(accuracy=0.75, circuit_executions=64).to_row()
        assert tuple(row) == CSV_COLUMNS
        assert row["sigma"] == "nan"
        assert row["accuracy"] == "0.75"
        assert row["circuit_executions"] == "64"

    def test_failure_record(self):
        marker = failure_record(record(epoch=7, cost=-0.5, circuit_executions=12))
        assert marker.is_failure
        assert marker.epoch == -1
        assert math.isnan(marker.cost)
        assert marker.circuit_executions == 0


class TestCsv:
    """Writing and reading results files."""

    def test_header_and_line_endings(self, tmp_path):
        path = write_results_csv(tmp_path / "out" / "ground_state.csv", [record()])
        text = path.read_bytes().decode("utf-8")
        assert text.startswith(",".join(CSV_COLUMNS) + "\n")
        assert "\r" not in text

    def test_typed_rows(self, tmp_path):
        path = write_results_csv(tmp_path / "r.csv", [record(cost=-0.25, accuracy=0.5, epoch=3)])
        (row,) = read_results_csv(path)
        assert row["epoch"] == 3
        assert row["cost"] == -0.25
        assert row["accuracy"] == 0.5
        assert math.isnan(row["sigma"])

    def test_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("experiment,method\nground_state,GRAD\n", encoding="utf-8")
        with pytest.raises(ResultsFormatError):
            read_results_csv(path)

    def test_missing_cells(self, tmp_path):
        path = write_results_csv(tmp_path / "r.csv", [record()])
        lines = path.read_text(encoding="utf-8").splitlines()
        path.write_text(lines[0] + "\n" + lines[1].rsplit(",", 2)[0] + "\n", encoding="utf-8")
        with pytest.raises(ResultsFormatError):
            read_results_csv(path)

    def test_bad_number(self, tmp_path):
        path = write_results_csv(tmp_path / "r.csv", [record()])
        path.write_text(path.read_text(encoding="utf-8").replace(",0,0.0,", ",zero,0.0,", 1),
                        encoding="utf-8")
        with pytest.raises(ResultsFormatError):
            read_results_csv(path)

    def test_bell_csv(self, tmp_path):
        path = write_bell_csv(tmp_path / "bell_noise.csv",
                              [(0.0, None, [0.5, 0.0, 0.0, 0.5]), (1.0, 100, [1.0, 0.0, 0.0, 0.0])])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(BELL_COLUMNS)
        assert lines[1] == "bell_noise,0.0,nan,0.5,0.0,0.0,0.5"
        assert lines[2] == "bell_noise,1.0,100,1.0,0.0,0.0,0.0"


class TestSummarize:
    """Per-epoch statistics across seeds."""

    def test_statistics_across_seeds(self, tmp_path):
        rows = [record(seed=s, epoch=0, cost=0.2) for s in range(3)]
        rows += [record(seed=s, epoch=1, cost=c) for s, c in zip(range(3), (-1.0, -0.8, -1.08))]
        summary = summarize(write_results_csv(tmp_path / "r.csv", rows))
        (config,) = summary["configs"]
        assert config["config"]["method"] == "GRAD"
        assert config["config"]["sigma"] is None
        epoch1 = config["epochs"][1]
        assert epoch1["epoch"] == 1
        assert epoch1["n_seeds"] == 3
        assert epoch1["cost"]["mean"] == pytest.approx(-0.96)
        assert epoch1["cost"]["min"] == pytest.approx(-1.08)
        assert epoch1["cost"]["max"] == pytest.approx(-0.8)
        assert epoch1["accuracy"] is None
        assert summary["failures"] == 0

    def test_single_seed(self, tmp_path):
        summary = summarize(write_results_csv(tmp_path / "r.csv", [record(cost=-0.5)]))
        stats = summary["configs"][0]["epochs"][0]["cost"]
        assert stats == {"mean": -0.5, "min": -0.5, "max": -0.5}

    def test_execution_totals_per_method(self, tmp_path):
        rows = []
        for method, per_epoch in (("LL", 64), ("LLES", 16)):
            for seed in range(2):
                for epoch in range(3):
                    rows.append(record(method=method, seed=seed, epoch=epoch,
                                       circuit_executions=per_epoch * epoch))
        summary = summarize(write_results_csv(tmp_path / "r.csv", rows))
        assert summary["executions"] == {"LL": 256, "LLES": 64}
        assert summary["executions"]["LL"] / summary["executions"]["LLES"] == 4

    def test_configs_kept_apart(self, tmp_path):
        rows = [record(method="LLES", sigma=0.1), record(method="LLES", sigma=0.2)]
        summary = summarize(write_results_csv(tmp_path / "r.csv", rows))
        assert sorted(c["config"]["sigma"] for c in summary["configs"]) == [0.1, 0.2]

    def test_failures_counted_not_summarized(self, tmp_path):
        rows = [record(seed=0, cost=-0.5), failure_record(record(seed=1))]
        summary = summarize(write_results_csv(tmp_path / "r.csv", rows))
        assert summary["failures"] == 1
        assert summary["configs"][0]["epochs"][0]["n_seeds"] == 1

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("not,a,results,file\n", encoding="utf-8")
        with pytest.raises(ResultsFormatError):
            summarize(path)
