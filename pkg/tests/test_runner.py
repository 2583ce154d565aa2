"""
Tests for the scenario runner: batches, tables and reports.
"""
import csv
import json

import pytest

from fsskit.config import DEFAULT_CONFIG
from fsskit.errors import ThresholdError
from fsskit.runner import (
    BatchResult,
    BatchRunner,
    Task,
    TaskResult,
    run_scenario,
    sweep,
    write_csv,
)
from fsskit.scenario import load_scenario


def _run(name, out_dir, **kwargs):
    return run_scenario(load_scenario(name), out_dir=out_dir, base_config=DEFAULT_CONFIG, **kwargs)


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestWriteCsv:
    """CSV tables."""

    def test_header_union_and_format(self, tmp_path):
        path = write_csv(tmp_path / "sub" / "t.csv", [{"a": 1.5, "b": 2}, {"a": 0.25, "c": "x"}], "%.3e")
        rows = _rows(path)
        assert list(rows[0].keys()) == ["a", "b", "c"]
        assert rows[0]["a"] == "1.500e+00"
        assert rows[0]["b"] == "2"
        assert rows[1]["b"] == ""
        assert rows[1]["c"] == "x"

    def test_nonfinite_floats_pass_through(self, tmp_path):
        rows = _rows(write_csv(tmp_path / "t.csv", [{"a": float("nan")}]))
        assert rows[0]["a"] == "nan"


class TestBatch:
    """Batch execution and exit codes."""

    def test_exit_code_is_max(self):
        results = [
            TaskResult(0, "fss", {}, True),
            TaskResult(1, "fss", {}, False, 1),
            TaskResult(2, "fss", {}, False, 3),
        ]
        assert BatchResult(results, {}).exit_code == 3

    def test_failed_without_code_counts_as_one(self):
        assert BatchResult([TaskResult(0, "fss", {}, False)], {}).exit_code == 1
        assert BatchResult([TaskResult(0, "fss", {}, True)], {}).exit_code == 0
        assert BatchResult([], {}).exit_code == 0

    @pytest.mark.parametrize("jobs", [1, 3])
    def test_results_in_task_order(self, jobs):
        tasks = [Task(i, "sample", 0.0, complex(i)) for i in range(7)]

        def body(task):
            return TaskResult(task.index, task.kind, {"value": task.point.real}, True)

        batch = BatchRunner(jobs).run(body, tasks)
        assert [r.index for r in batch.results] == list(range(7))
        assert batch.stats["total_tasks"] == 7
        assert batch.stats["failed"] == 0
        assert batch.stats["jobs"] == jobs

    def test_errors_become_rows(self):
        def body(task):
            raise ThresholdError("no contraction", hint=2.5)

        batch = BatchRunner().run(body, [Task(0, "fss", 1.0, 0.5 + 0j)])
        result = batch.results[0]
        assert not result.passed
        assert result.exit_code == 1
        assert result.row["hint"] == 2.5
        assert result.row["error"].startswith("ThresholdError")
        assert result.row["lambda_re"] == 0.5
        assert batch.exit_code == 1


class TestTrivialScenario:
    """End-to-end run of the exact exponential scenario."""

    def test_fss_run(self, tmp_path):
        run = _run("trivial-n2", tmp_path)
        assert run.exit_code == 0
        names = {p.name for p in run.files}
        assert "trivial-n2_fss.csv" in names
        assert "trivial-n2_report.json" in names
        assert "trivial-n2_fss_000.csv" in names
        assert "trivial-n2_fss_005.csv" in names

        rows = _rows(tmp_path / "trivial-n2_fss.csv")
        assert len(rows) == 6
        assert [int(r["index"]) for r in rows] == list(range(6))
        assert {int(r["sector"]) for r in rows} == {1, 2}

        table = _rows(tmp_path / "trivial-n2_fss_000.csv")
        assert len(table) == 21

        with open(tmp_path / "trivial-n2_report.json") as f:
            report = json.load(f)
        assert report["exit_code"] == 0
        assert report["name"] == "trivial-n2"
        assert report["pipeline"] == "fss"
        assert report["version"] == "0.1.0"
        assert report["sections"]["fss"]["stats"]["passed"] == 6
        assert all(r["passed"] for r in report["sections"]["fss"]["results"])

    def test_deterministic_across_runs_and_jobs(self, tmp_path):
        _run("trivial-n2", tmp_path / "one")
        _run("trivial-n2", tmp_path / "two", jobs=2)
        for name in ("trivial-n2_fss.csv", "trivial-n2_fss_003.csv"):
            first = (tmp_path / "one" / name).read_text()
            second = (tmp_path / "two" / name).read_text()
            assert first == second

    def test_metrics_cover_only_the_current_run(self, tmp_path):
        first = _run("trivial-n2", tmp_path / "one").report["metrics"]["counters"]
        second = _run("trivial-n2", tmp_path / "two").report["metrics"]["counters"]
        assert first["tasks"] == 6
        assert second == first

    def test_sectors_pipeline(self, tmp_path):
        run = _run("trivial-n2", tmp_path, pipeline="sectors")
        assert run.exit_code == 0
        section = run.report["sections"]["sectors"]
        assert section["count"] == 2
        assert len(section["large_sectors"]) == 1
        rows = _rows(tmp_path / "trivial-n2_sectors.csv")
        assert len(rows) == 2

    def test_gamma_sweep(self, tmp_path):
        run = sweep(load_scenario("trivial-n2"), "gamma", tmp_path, overrides={"picard.eps_fix": "1e-10"})
        assert run.exit_code == 0
        rows = _rows(tmp_path / "trivial-n2_sweep_gamma.csv")
        assert len(rows) == 6
        assert "gamma" in rows[0]

    def test_bad_override(self, tmp_path):
        from fsskit.errors import SpecError

        with pytest.raises(SpecError):
            _run("trivial-n2", tmp_path, overrides={"nope.key": 1})


class TestHugeCoefficients:
    """The contraction certificate fails and is reported with exit code 1."""

    def test_exit_code(self, tmp_path):
        run = _run("huge-a", tmp_path)
        assert run.exit_code == 1
        rows = _rows(tmp_path / "huge-a_fss.csv")
        assert rows[0]["error"].startswith("ThresholdError")
        result = run.report["sections"]["fss"]["results"][0]
        assert result["passed"] is False
        assert result["error"] == "ThresholdError"
