"""
Scenario execution: task fan-out, CSV tables and the JSON verification report.
"""
import csv
import json
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .config import get_logger
from .errors import CertificateError, DomainError, FsskitError, SectorError
from .kernels import KernelContext, KernelSettings, l2_along_ray, psi_pair_bound, theta_sup
from .monitoring import Timer, get_metrics_collector
from .picard import PicardSettings, fss_threshold, sector_contexts
from .propagator import propagator_for
from .scenario import Scenario
from .sectors import compute_sectors, large_sector
from .solutions import (
    build_fss,
    build_large_sector,
    overlap_agreement,
    residual_sup,
    sample_overlap,
    supplement_fss,
    verify_integral_residual,
)
from .sturm import pencil_fss
from .system import gamma_K_phi, kernel_mass, laurent_threshold, phi_certificate

logger = get_logger("Runner")

RESIDUAL_LIMIT = 1e-7
OVERLAP_LIMIT = 1e-6
RATIO_SLACK = 0.05
REGULARIZED_LIMIT = 1e-6
QUASI_LIMIT = 1e-7


@dataclass
class Task:
    index: int
    kind: str
    alpha: float
    point: complex = 0j
    extra: Dict[str, Any] = field(default_factory=dict)


@dataclass
class TaskResult:
    index: int
    kind: str
    row: Dict[str, Any]
    passed: bool
    exit_code: int = 0
    detail: Dict[str, Any] = field(default_factory=dict)
    table: Optional[List[Dict[str, Any]]] = None


@dataclass
class BatchResult:
    results: List[TaskResult]
    stats: Dict[str, Any]

    @property
    def exit_code(self) -> int:
        codes = [r.exit_code for r in self.results]
        codes += [1 for r in self.results if not r.passed and r.exit_code == 0]
        return max(codes, default=0)


class BatchRunner:
    """Runs independent tasks on a thread pool; results come back in task order."""

    def __init__(self, jobs: int = 1):
        self.jobs = max(1, int(jobs))
        self.metrics = get_metrics_collector()

    def _run_one(self, fn: Callable[[Task], TaskResult], task: Task) -> TaskResult:
        with Timer(self.metrics, "task", {"kind": task.kind}):
            try:
                return fn(task)
            except FsskitError as e:
                self.metrics.increment_counter("task_failures", labels={"kind": task.kind})
                logger.warning(f"Task {task.index} ({task.kind}) failed: {e}")
                row = _base_row(task)
                row["error"] = f"{type(e).__name__}: {e}"
                detail: Dict[str, Any] = {"error": type(e).__name__, "message": str(e)}
                hint = getattr(e, "hint", None)
                if hint is not None:
                    row["hint"] = hint
                    detail["hint"] = hint
                return TaskResult(task.index, task.kind, row, False, e.exit_code, detail)

    def run(self, fn: Callable[[Task], TaskResult], tasks: List[Task]) -> BatchResult:
        started = time.perf_counter()
        results: List[TaskResult] = []
        if self.jobs == 1:
            results = [self._run_one(fn, t) for t in tasks]
        else:
            with ThreadPoolExecutor(max_workers=self.jobs) as executor:
                futures = {executor.submit(self._run_one, fn, t): t for t in tasks}
                for future in as_completed(futures):
                    results.append(future.result())
        results.sort(key=lambda r: r.index)
        wall = time.perf_counter() - started
        failed = sum(1 for r in results if not r.passed)
        self.metrics.increment_counter("tasks", len(results))
        stats = {
            "total_tasks": len(results),
            "passed": len(results) - failed,
            "failed": failed,
            "jobs": self.jobs,
            "wall_time": wall,
            "throughput": len(results) / wall if wall > 0 else 0.0,
        }
        logger.info(f"Ran {len(results)} tasks on {self.jobs} workers in {wall:.2f}s ({failed} failed)")
        return BatchResult(results, stats)


def _base_row(task: Task) -> Dict[str, Any]:
    row: Dict[str, Any] = {"index": task.index, "alpha": task.alpha}
    key = "z" if task.kind == "sturm" else "lambda"
    if task.kind != "l2":
        row[f"{key}_re"] = task.point.real
        row[f"{key}_im"] = task.point.imag
        row[f"abs_{key}"] = abs(task.point)
    row.update({k: v for k, v in task.extra.items() if isinstance(v, (int, float, str))})
    return row


def write_csv(path: Path, rows: List[Dict[str, Any]], float_format: str = "%.12e") -> Path:
    """Header from the union of row keys in first-seen order; floats through ``float_format``."""

    fields: List[str] = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=fields, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (float_format % v if isinstance(v, float) and math.isfinite(v) else v)
                             for k, v in row.items()})
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


@dataclass
class RunReport:
    exit_code: int
    files: List[Path]
    report: Dict[str, Any]


class ScenarioRun:
    """One scenario under one merged configuration."""

    def __init__(self, scenario: Scenario, config: Dict[str, Any], out_dir: Path, jobs: int = 1):
        self.scenario = scenario
        self.config = config
        self.out_dir = out_dir
        self.runner = BatchRunner(jobs)
        self.plan = scenario.plan
        self.spec = scenario.system
        self.kernel_settings = KernelSettings.from_config(config)
        self.picard_settings = PicardSettings.from_config(config)
        self.float_format = config.get("output", {}).get("float_format", "%.12e")
        self.geometry = compute_sectors(self.spec.b, self.plan.quarter_planes)
        self._contexts: Dict[Tuple[float, int], List[KernelContext]] = {}
        self._lock = threading.Lock()
        self.files: List[Path] = []
        self.sections: Dict[str, Any] = {}
        self.batches: List[BatchResult] = []

    # Helpers

    def _kappa(self, lam: complex) -> int:
        if self.plan.sector is not None:
            return int(self.plan.sector)
        return self.geometry.find(lam).kappa

    def _contexts_at(self, alpha: float, lam: complex) -> List[KernelContext]:
        sector = self.geometry.sector(self._kappa(lam))
        if not sector.contains(lam):
            raise SectorError(f"λ={lam} is outside the closure of {sector.label}")
        key = (alpha, sector.kappa)
        with self._lock:
            if key not in self._contexts:
                self._contexts[key] = sector_contexts(self.spec, alpha, sector, self.kernel_settings)[1]
            return self._contexts[key]

    def _point_tasks(self, kind: str) -> List[Task]:
        tasks = []
        for alpha in self.scenario.alphas:
            for point in self.plan.values():
                tasks.append(Task(len(tasks), kind, alpha, point))
        return tasks

    def _table(self, name: str, rows: List[Dict[str, Any]]) -> None:
        if rows:
            path = self.out_dir / f"{self.scenario.name}_{name}.csv"
            self.files.append(write_csv(path, rows, self.float_format))

    def _batch(self, name: str, fn: Callable[[Task], TaskResult], tasks: List[Task]) -> BatchResult:
        batch = self.runner.run(fn, tasks)
        self.batches.append(batch)
        self._table(name, [r.row for r in batch.results])
        for r in batch.results:
            if r.table:
                self._table(f"{name}_{r.index:03d}", r.table)
        self.sections[name] = {
            "stats": batch.stats,
            "results": [dict(r.detail, index=r.index, passed=r.passed) for r in batch.results],
        }
        return batch

    # Task bodies

    def _fss_task(self, task: Task) -> TaskResult:
        kappa = self._kappa(task.point)
        system = build_fss(
            self.spec, task.alpha, kappa, task.point, self.kernel_settings, self.picard_settings,
            self.plan.quarter_planes,
        )
        residual = verify_integral_residual(system)
        certs = [c.certificate for c in system.columns]
        bound_V2 = max(c.bound_V2 for c in certs)
        ratio = max(c.ratio for c in certs)
        row = _base_row(task)
        row.update({
            "sector": kappa,
            "bound_V": max(c.bound.bound_V for c in certs),
            "bound_V2": bound_V2,
            "series_constant": max(c.series_constant for c in certs),
            "iterations": max(c.iterations for c in certs),
            "ratio": ratio,
            "integral_residual": residual,
            "residual_sup": residual_sup(system),
            "det_abs": system.checks["determinant_at_alpha"]["value"],
        })
        checks_ok = all(c["passed"] for c in system.checks.values())
        passed = checks_ok and residual < RESIDUAL_LIMIT and ratio <= bound_V2 + RATIO_SLACK
        table = system.to_rows(system.sample_points(self.plan.samples)) if self.plan.export else None
        return TaskResult(task.index, task.kind, row, passed, detail=system.to_dict(), table=table)

    def _large_task(self, task: Task) -> TaskResult:
        m = int(self.plan.m)
        system = build_large_sector(self.spec, task.alpha, m, task.point, self.kernel_settings, self.picard_settings)
        residual = verify_integral_residual(system)
        row = _base_row(task)
        row.update({"m": m, "side": system.side, "integral_residual": residual})
        for name, check in system.checks.items():
            if name.startswith("envelope"):
                row[name] = check["value"]
        detail = system.to_dict()
        ls = system.large
        passed = residual < RESIDUAL_LIMIT and system.checks["kronecker_at_alpha"]["passed"]
        if ls.gamma1.contains(task.point) or ls.gamma_sigma.contains(task.point):
            kappa = compute_sectors(self.spec.b, self.spec.n == 2).find(task.point).kappa
            fss = build_fss(self.spec, task.alpha, kappa, task.point, self.kernel_settings, self.picard_settings,
                            self.spec.n == 2)
            full = supplement_fss(system, fss)
            row["supplemented_det_abs"] = full.checks["determinant_at_alpha"]["value"]
            detail["supplemented"] = full.checks
        table = system.to_rows(system.sample_points(self.plan.samples)) if self.plan.export else None
        return TaskResult(task.index, task.kind, row, passed, detail=detail, table=table)

    def _overlap_task(self, task: Task) -> TaskResult:
        gap = overlap_agreement(
            self.spec, task.alpha, int(self.plan.m), task.point, self.kernel_settings, self.picard_settings
        )
        row = _base_row(task)
        row.update({"m": int(self.plan.m), "gap": gap})
        return TaskResult(task.index, task.kind, row, gap <= OVERLAP_LIMIT, detail={"gap": gap})

    def _sturm_task(self, task: Task) -> TaskResult:
        solution = pencil_fss(self.scenario.pencil, task.alpha, task.point, self.kernel_settings,
                              self.picard_settings)
        detail = solution.to_dict()
        row = _base_row(task)
        row["reflected"] = int(solution.reflected)
        for j in range(2):
            for k in range(2):
                row[f"s{j + 1}{k + 1}_sup"] = detail["residual_sup"][j][k]
        row.update({
            "wronskian_abs": detail["wronskian_abs"],
            "quasi_derivative_defect": detail["quasi_derivative_defect"],
            "regularized_residual": detail["regularized_residual"],
            "integral_residual": verify_integral_residual(solution.system),
        })
        passed = (
            detail["regularized_residual"] <= REGULARIZED_LIMIT
            and detail["quasi_derivative_defect"] <= QUASI_LIMIT
            and row["integral_residual"] < RESIDUAL_LIMIT
        )
        table = solution.to_rows(solution.system.sample_points(self.plan.samples)) if self.plan.export else None
        return TaskResult(task.index, task.kind, row, passed, detail=detail, table=table)

    def _theta_value(self, alpha: float, lam: complex, refine: bool = True):
        estimates = [theta_sup(ctx, lam, refine=refine) for ctx in self._contexts_at(alpha, lam)]
        return max(estimates, key=lambda e: e.value)

    def _psi_value(self, alpha: float, lam: complex) -> float:
        """max Ψ_jl over off-block pairs; NaN where ρ ≢ 1 or D ≢ 0."""
        ctx = self._contexts_at(alpha, lam)[0]
        n = self.spec.n
        try:
            return max((psi_pair_bound(ctx, j, l, lam) for j in range(n) for l in range(n) if j != l), default=0.0)
        except DomainError:
            return math.nan

    def _theta_task(self, task: Task) -> TaskResult:
        est = self._theta_value(task.alpha, task.point)
        row = _base_row(task)
        row.update({
            "theta": est.value,
            "gamma": gamma_K_phi(self.spec, task.alpha, task.point).gamma,
            "psi": self._psi_value(task.alpha, task.point),
            "theta_grid": est.grid_value,
            "theta_refined": est.refined_value,
            "tail": est.tail,
            "ceiling": est.ceiling,
        })
        return TaskResult(task.index, task.kind, row, True, detail={"theta": est.value})

    def _gamma_task(self, task: Task) -> TaskResult:
        bounds = gamma_K_phi(self.spec, task.alpha, task.point)
        row = _base_row(task)
        row.update({
            "gamma": bounds.gamma,
            "K": bounds.K,
            "phi": bounds.phi,
            "kernel_mass": kernel_mass(self.spec, task.alpha, task.point),
        })
        return TaskResult(task.index, task.kind, row, True, detail={"gamma": bounds.gamma})

    def _residual_task(self, task: Task) -> TaskResult:
        system = build_fss(self.spec, task.alpha, self._kappa(task.point), task.point, self.kernel_settings,
                           self.picard_settings, self.plan.quarter_planes)
        row = _base_row(task)
        value = residual_sup(system)
        row.update({"residual_sup": value, "integral_residual": verify_integral_residual(system)})
        return TaskResult(task.index, task.kind, row, True, detail={"residual_sup": value})

    def _l2_task(self, task: Task) -> TaskResult:
        direction = complex(task.extra["direction"])
        origin = direction * (min(self.plan.radii) if self.plan.radii else 1.0)
        alpha = task.alpha

        if self.plan.l2_of == "theta":
            def g(lam: complex) -> float:
                return self._theta_value(alpha, lam, refine=False).value
        else:
            def g(lam: complex) -> float:
                system = build_fss(self.spec, alpha, self._kappa(lam), lam, self.kernel_settings,
                                   self.picard_settings, self.plan.quarter_planes)
                return residual_sup(system)

        report = l2_along_ray(g, (origin, direction), self.plan.r_max)
        row = _base_row(task)
        row.update({
            "ray_angle": float(np.angle(direction)),
            "partial_quarter": report.partials[0],
            "partial_half": report.partials[1],
            "partial_full": report.partials[2],
            "increment": report.increments[1],
            "ratio": report.ratios[1],
            "error": report.error,
            "stable": int(report.stable),
        })
        return TaskResult(task.index, task.kind, row, True, detail=report.to_dict())

    # Pipelines

    def run_sectors(self) -> None:
        geometry = self.geometry
        rows = []
        for sector in geometry.sectors:
            record = sector.to_record()
            record["permutation"] = " ".join(str(p) for p in record["permutation"])
            rows.append(record)
        self._table("sectors", rows)
        large = []
        for m in range(2, self.spec.n + 1):
            try:
                large.append(large_sector(self.spec.b, m, quarter_planes=self.spec.n == 2).to_record())
            except SectorError:
                break
        self.sections["sectors"] = {"count": len(rows), "sectors": rows, "large_sectors": large}

    def run_fss(self) -> None:
        self._batch("fss", self._fss_task, self._point_tasks("fss"))

    def run_largesector(self) -> None:
        self._batch("largesector", self._large_task, self._point_tasks("large"))
        if self.plan.overlap > 0:
            ls = large_sector(self.spec.b, int(self.plan.m), quarter_planes=self.spec.n == 2)
            radius = max(self.plan.radii) if self.plan.radii else 50.0
            tasks = []
            for alpha in self.scenario.alphas:
                for side in ("gamma1", "gamma_sigma"):
                    try:
                        points = sample_overlap(ls, side, self.plan.overlap, radius, seed=self.plan.seed)
                    except SectorError:
                        continue
                    for p in points:
                        tasks.append(Task(len(tasks), "overlap", alpha, p, {"side": side}))
            self._batch("overlap", self._overlap_task, tasks)

    def run_sturm(self) -> None:
        self._batch("sturm", self._sturm_task, self._point_tasks("sturm"))

    def run_sweep(self, quantity: Optional[str] = None) -> None:
        quantity = quantity or self.plan.quantity
        if quantity == "l2-partial":
            tasks = [
                Task(i, "l2", alpha, extra={"direction": d})
                for i, (alpha, d) in enumerate((a, d) for a in self.scenario.alphas for d in self.plan.directions())
            ]
            self._batch("sweep_l2-partial", self._l2_task, tasks)
            return
        fn = {"theta": self._theta_task, "gamma": self._gamma_task, "residual-sup": self._residual_task}[quantity]
        self._batch(f"sweep_{quantity}", fn, self._point_tasks(quantity))

    def run_verify(self) -> None:
        checks: Dict[str, Any] = {}
        failures = 0
        for alpha in self.scenario.alphas:
            verdict = propagator_for(self.spec, alpha).verify()
            checks[f"propagator_alpha_{alpha:g}"] = verdict
            failures += sum(1 for v in verdict.values() if not v["passed"])
        phi = phi_certificate(self.spec, self.scenario.alphas)
        checks["phi_certificate"] = phi
        failures += sum(1 for r in phi if not r["passed"])
        if self.plan.threshold and self.plan.rays:
            thresholds = []
            for alpha in self.scenario.alphas:
                value = fss_threshold(self.spec, alpha, self.plan.directions(), self.kernel_settings,
                                      self.picard_settings, self.plan.quarter_planes)
                thresholds.append({"alpha": alpha, "lambda_alpha": value, "phi": laurent_threshold(self.spec, alpha)})
            checks["threshold"] = thresholds
            self._table("threshold", thresholds)
        self.sections["verify"] = {"checks": checks, "failures": failures}
        if self.plan.values():
            if self.scenario.pencil is not None:
                self.run_sturm()
            else:
                self.run_fss()
        if failures:
            self.batches.append(BatchResult([TaskResult(-1, "verify", {}, False, 1)], {}))

    def execute(self) -> RunReport:
        pipeline = self.scenario.pipeline
        started = time.perf_counter()
        get_metrics_collector().reset()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        try:
            if pipeline == "sectors":
                self.run_sectors()
            elif pipeline == "fss":
                self.run_fss()
            elif pipeline == "largesector":
                self.run_largesector()
            elif pipeline == "sturm":
                self.run_sturm()
            elif pipeline == "sweep-theta":
                self.run_sweep("theta")
            elif pipeline == "sweep":
                self.run_sweep()
            else:
                self.run_verify()
            exit_code = max((b.exit_code for b in self.batches), default=0)
        except CertificateError as e:
            logger.error(f"Certificate failure in {self.scenario.name}: {e}")
            self.sections["error"] = {"type": type(e).__name__, "message": str(e)}
            exit_code = e.exit_code
        report = {
            "schema": 1,
            "name": self.scenario.name,
            "pipeline": pipeline,
            "version": __version__,
            "alphas": self.scenario.alphas,
            "plan": self.plan.to_dict(),
            "seed": self.plan.seed,
            "tolerances": {k: self.config[k] for k in ("tolerances", "kernels", "picard")},
            "exit_code": exit_code,
            "sections": self.sections,
            "wall_time": time.perf_counter() - started,
            "metrics": get_metrics_collector().get_metrics(),
        }
        path = self.out_dir / f"{self.scenario.name}_report.json"
        with open(path, "w") as f:
            json.dump(_jsonable(report), f, indent=2, sort_keys=True)
        self.files.append(path)
        logger.info(f"Scenario {self.scenario.name} finished with exit code {exit_code}")
        return RunReport(exit_code, list(self.files), report)


def run_scenario(
    scenario: Scenario,
    out_dir: Optional[Path] = None,
    jobs: int = 1,
    overrides: Optional[Dict[str, Any]] = None,
    base_config: Optional[Dict[str, Any]] = None,
    pipeline: Optional[str] = None,
) -> RunReport:
    """
    Execute ``scenario`` and write its tables and report.

    Args:
        out_dir: Output directory (defaults to the scenario's, then the configured one)
        jobs: Worker threads
        overrides: Dotted-key tolerance overrides applied last
        pipeline: Replaces the scenario's pipeline

    Raises:
        SpecError: On invalid overrides
    """
    config = scenario.config(base_config, overrides)
    if pipeline is not None:
        scenario.pipeline = pipeline
    directory = out_dir or Path(scenario.output.get("directory", config["output"]["directory"]))
    return ScenarioRun(scenario, config, Path(directory), jobs).execute()


def sweep(
    scenario: Scenario,
    quantity: str,
    out_dir: Optional[Path] = None,
    jobs: int = 1,
    overrides: Optional[Dict[str, Any]] = None,
) -> RunReport:
    """One CSV row per (α, λ) sample of ``quantity``."""
    scenario.plan.quantity = quantity
    return run_scenario(scenario, out_dir, jobs, overrides, pipeline="sweep")


__all__ = ["BatchResult", "BatchRunner", "RunReport", "ScenarioRun", "Task", "TaskResult", "run_scenario", "sweep", "write_csv"]
