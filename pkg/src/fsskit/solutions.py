"""
Fundamental and large-sector systems of solutions.

A column is stored in the normalised variable z of its integral equation;
the solution itself is y(x) = M_α(x) z(x) e^{λω(p(x) − p(α))} on [α, T_cut]
and the initial-value continuation of y(α) = z(α) on [0, α].
"""
import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .cache import MemoryCache, cache_key
from .config import DEFAULT_CONFIG, get_logger
from .errors import DegeneracyError, DomainError, SectorError
from .kernels import KernelContext, KernelSettings
from .monitoring import get_metrics_collector
from .picard import (
    BoundedContinuousVector,
    PicardCertificate,
    PicardSettings,
    exponential_source,
    integral_residual,
    sector_contexts,
    solve_fixed_point,
)
from .propagator import choose_cutoff, extend_to_zero, propagator_for
from .sectors import LargeSector, compute_sectors, large_sector
from .system import SystemSpec

logger = get_logger("Solutions")

TOLERANCES = DEFAULT_CONFIG["tolerances"]
ANALYTICITY = DEFAULT_CONFIG["analyticity"]

_CONTEXTS = MemoryCache(max_entries=32)


@dataclass(frozen=True)
class SolutionColumn:
    """
    One solved column.

    ``index`` is the column position in the context's numbering and
    ``permutation[i]`` the original row of row i.
    """

    index: int
    ctx: KernelContext
    lam: complex
    mu: complex
    w: BoundedContinuousVector
    z: BoundedContinuousVector
    certificate: Optional[PicardCertificate]
    permutation: Tuple[int, ...]

    @property
    def alpha(self) -> float:
        return self.ctx.alpha

    @property
    def t_cut(self) -> float:
        return self.ctx.t_cut

    @property
    def original_index(self) -> int:
        return self.permutation[self.index]

    def exponent(self, x: np.ndarray) -> np.ndarray:
        """μ(p(x) − p(α))."""
        return self.mu * (self.ctx.phase(x) - float(self.ctx.phase(self.alpha)))

    def normalised(self, x: np.ndarray) -> np.ndarray:
        """M_α(x)z(x) for x ∈ [α, T_cut], shape (len(x), n)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        M = self.ctx.propagator.M(x)
        return np.einsum("ijl,li->ij", M, self.z.interpolate(x))

    def values(self, x: np.ndarray, original: bool = True) -> np.ndarray:
        """
        y(x) for x ∈ [0, T_cut], shape (len(x), n).

        Raises:
            DomainError: For points outside [0, T_cut]
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0) or np.any(x > self.t_cut + 1e-12):
            raise DomainError(f"evaluation points must lie in [0, {self.t_cut:.6g}]")
        out = np.zeros((x.size, self.ctx.spec.n), dtype=complex)
        right = x >= self.alpha
        if np.any(right):
            with np.errstate(over="ignore", invalid="ignore"):
                out[right] = self.normalised(x[right]) * np.exp(self.exponent(x[right]))[:, None]
        if np.any(~right):
            boundary = self.z.interpolate(np.array([self.alpha]))[:, 0]
            ext = extend_to_zero(self.ctx.spec, self.lam, boundary, self.alpha, x[~right])
            lookup = {float(t): v[:, 0] for t, v in zip(ext.x, ext.values)}
            out[~right] = np.stack([lookup[float(t)] for t in x[~right]])
        if original:
            mapped = np.empty_like(out)
            mapped[:, list(self.permutation)] = out
            return mapped
        return out


@dataclass
class SolutionSystem:
    """
    A family of solved columns at one (α, λ).

    ``kind`` is ``fss``, ``large`` or ``supplemented``; ``region`` names the
    sector (or sub-region of Ω_m) the columns were solved in.
    """

    spec: SystemSpec
    alpha: float
    lam: complex
    kind: str
    region: str
    columns: List[SolutionColumn]
    checks: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    large: Optional[LargeSector] = None
    side: Optional[str] = None

    @property
    def n(self) -> int:
        return self.spec.n

    @property
    def t_cut(self) -> float:
        return min(c.t_cut for c in self.columns)

    def matrix(self, x: np.ndarray, original: bool = True) -> np.ndarray:
        """
        Solution matrix at ``x``, shape (len(x), n, number of columns).

        With ``original=False`` rows stay in the solving numbering (FSS only).
        """
        cols = [c.values(x, original=original) for c in self.columns]
        if original and self.kind == "fss":
            perm = self.columns[0].permutation
            order = np.argsort(perm)
            cols = [cols[i] for i in order]
        return np.stack(cols, axis=-1)

    def at_alpha(self) -> np.ndarray:
        """Solution matrix at x = α in original numbering, from the normalised variables."""
        out = np.zeros((self.n, len(self.columns)), dtype=complex)
        for c, col in enumerate(self.columns):
            v = col.z.interpolate(np.array([self.alpha]))[:, 0]
            out[list(col.permutation), c] = v
        if self.kind == "fss":
            out = out[:, np.argsort(self.columns[0].permutation)]
        return out

    def certificates(self) -> List[Dict[str, Any]]:
        return [c.certificate.to_dict() for c in self.columns if c.certificate is not None]

    def sample_points(self, count: int = 201) -> np.ndarray:
        """Points on [0, T_cut] including α."""
        return np.unique(np.append(np.linspace(0.0, self.t_cut, count), self.alpha))

    def to_rows(self, x: Optional[np.ndarray] = None) -> List[Dict[str, float]]:
        """CSV rows: x and the real and imaginary parts of every entry, 1-based names."""
        x = self.sample_points() if x is None else np.asarray(x, dtype=float)
        values = self.matrix(x)
        labels = [c.original_index + 1 for c in self.columns]
        if self.kind == "fss":
            labels = sorted(labels)
        rows = []
        for i, xi in enumerate(x):
            row: Dict[str, float] = {"x": float(xi)}
            for j in range(self.n):
                for c, k in enumerate(labels):
                    row[f"y{j + 1}{k}_re"] = float(values[i, j, c].real)
                    row[f"y{j + 1}{k}_im"] = float(values[i, j, c].imag)
            rows.append(row)
        return rows

    def export_csv(self, path: Union[str, Path], x: Optional[np.ndarray] = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        rows = self.to_rows(x)
        with open(path, "w", newline="") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        logger.info(f"Wrote {len(rows)} rows to {path}")
        return path

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "region": self.region,
            "alpha": self.alpha,
            "lambda_re": self.lam.real,
            "lambda_im": self.lam.imag,
            "columns": [c.original_index + 1 for c in self.columns],
            "t_cut": self.t_cut,
            "checks": self.checks,
            "certificates": self.certificates(),
        }


def _check(passed: bool, value: float, **extra: Any) -> Dict[str, Any]:
    return {"passed": bool(passed), "value": float(value), **extra}


def _contexts_for(
    spec: SystemSpec, alpha: float, sector, settings: Optional[KernelSettings]
) -> Tuple[SystemSpec, List[KernelContext]]:
    key = cache_key({"spec": spec.fingerprint, "alpha": alpha, "kappa": sector.kappa, "lo": sector.lo,
                     "settings": repr(settings)})
    return _CONTEXTS.get_or_compute(key, lambda: sector_contexts(spec, alpha, sector, settings))


def clear_context_cache() -> None:
    _CONTEXTS.clear()


def build_fss(
    spec: SystemSpec,
    alpha: float,
    kappa: int,
    lam: complex,
    kernel_settings: Optional[KernelSettings] = None,
    picard_settings: Optional[PicardSettings] = None,
    quarter_planes: bool = False,
) -> SolutionSystem:
    """
    FSS {y_k} on the closure of Γ_κ.

    Each column solves z_k = e_k + 𝒱_k(λ)z_k with ω = b_k in the sector's
    numbering.

    Raises:
        SectorError: If λ is outside the closure of Γ_κ
        ThresholdError: If the contraction bound fails at λ
        DegeneracyError: If det Y(α) vanishes
    """
    lam = complex(lam)
    geometry = compute_sectors(spec.b, quarter_planes)
    sector = geometry.sector(kappa)
    if not sector.contains(lam):
        raise SectorError(f"λ={lam} is outside the closure of {sector.label}")
    started = time.perf_counter()
    ordered, contexts = _contexts_for(spec, alpha, sector, kernel_settings)
    perm = tuple(sector.permutation)
    columns = []
    metrics = get_metrics_collector()
    for k, ctx in enumerate(contexts):
        grid = ctx.grid_data(lam).grid
        w = BoundedContinuousVector.unit(grid, spec.n, k)
        z, cert = solve_fixed_point(ctx, w, lam, picard_settings)
        metrics.increment_counter("picard_iterations", cert.iterations)
        columns.append(SolutionColumn(k, ctx, lam, lam * ordered.b[k], w, z, cert, perm))
    system = SolutionSystem(spec, float(alpha), lam, "fss", sector.label, columns)

    Z = np.stack([c.z.interpolate(np.array([alpha]))[:, 0] for c in columns], axis=1)
    lower = max((abs(Z[j, k] - (1.0 if j == k else 0.0)) for k in range(spec.n) for j in range(k, spec.n)), default=0.0)
    det = complex(np.linalg.det(Z))
    system.checks = {
        "kronecker_at_alpha": _check(lower <= 1e-12, lower),
        "determinant_at_alpha": _check(abs(det) > TOLERANCES["degeneracy"], abs(det)),
    }
    if abs(det) <= TOLERANCES["degeneracy"]:
        raise DegeneracyError(f"det Y(α) = {det:.3e} at λ={lam}")
    metrics.increment_counter("fss_built")
    logger.info(
        f"Built FSS in {sector.label} at λ={lam:.6g}, α={alpha}",
        extra={"lam": str(lam), "alpha": alpha, "seconds": time.perf_counter() - started},
    )
    return system


def extract_residuals(
    system: SolutionSystem, x: Optional[np.ndarray] = None
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    s_jk(x, λ) = y_jk e^{−λb_k(p(x) − p(α))} − m_jk(x) on x ≥ α.

    Returns:
        (x, s of shape (len(x), n, n) in the solving numbering, sup_x |s_jk|)
    """
    if system.kind != "fss":
        raise DomainError("residuals are defined for FSS columns")
    if x is None:
        x = system.columns[0].z.grid.points()
    x = np.asarray(x, dtype=float)
    x = x[(x >= system.alpha) & (x <= system.t_cut)]
    s = np.zeros((x.size, system.n, system.n), dtype=complex)
    for col in system.columns:
        M = col.ctx.propagator.M(x)
        e = np.zeros(system.n)
        e[col.index] = 1.0
        diff = col.z.interpolate(x) - e[:, None]
        s[:, :, col.index] = np.einsum("ijl,li->ij", M, diff)
    return x, s, np.max(np.abs(s), axis=0)


def residual_sup(system: SolutionSystem) -> float:
    """max_jk sup_x |s_jk(x, λ)|."""
    return float(np.max(extract_residuals(system)[2]))


def build_large_sector(
    spec: SystemSpec,
    alpha: float,
    m: int,
    lam: complex,
    kernel_settings: Optional[KernelSettings] = None,
    picard_settings: Optional[PicardSettings] = None,
    side: Optional[str] = None,
) -> SolutionSystem:
    """
    Solutions u_m, …, u_n (1-based) analytic on Ω_m.

    The sub-region containing λ fixes ω: b_m on Γ_1, b_m e^{(−1)^m πi/n} on Λ
    and b_{m+1} on Γ_σ. ``side`` forces a sub-region.

    Raises:
        SectorError: If b is not canonical or λ is outside Ω_m
        ThresholdError: If the contraction bound fails at λ
    """
    lam = complex(lam)
    ls = large_sector(spec.b, m, quarter_planes=spec.n == 2)
    side = side or ls.side_of(lam)
    region = ls.region_for(side)
    if not region.contains(lam):
        raise SectorError(f"λ={lam} is outside the closure of {region.label}")
    omega = ls.omega_for(side)
    started = time.perf_counter()
    t_cut = choose_cutoff(spec, alpha)
    propagator = propagator_for(spec, alpha, t_cut)
    ctx = KernelContext(spec, alpha, m - 1, omega, region, kernel_settings, t_cut, propagator)
    grid = ctx.grid_data(lam).grid
    identity = tuple(range(spec.n))
    columns = []
    metrics = get_metrics_collector()
    for k in range(m - 1, spec.n):
        w = exponential_source(ctx, grid, lam * (spec.b[k] - omega), k)
        z, cert = solve_fixed_point(ctx, w, lam, picard_settings)
        metrics.increment_counter("picard_iterations", cert.iterations)
        columns.append(SolutionColumn(k, ctx, lam, lam * omega, w, z, cert, identity))
    system = SolutionSystem(spec, float(alpha), lam, "large", f"Ω_{m}/{region.label}", columns, large=ls, side=side)

    U = np.stack([c.z.interpolate(np.array([alpha]))[:, 0] for c in columns], axis=1)
    block = U[m - 1 :, :]
    delta = float(np.max(np.abs(block - np.eye(block.shape[0]))))
    system.checks = {"kronecker_at_alpha": _check(delta <= 1e-12, delta)}
    system.checks.update(growth_envelope(system))
    logger.info(
        f"Built large-sector system Ω_{m} ({side}) at λ={lam:.6g}, α={alpha}",
        extra={"lam": str(lam), "alpha": alpha, "seconds": time.perf_counter() - started},
    )
    return system


def growth_envelope(system: SolutionSystem) -> Dict[str, Dict[str, Any]]:
    """
    Observed constants C_k = sup_x |u_k(x)e^{−λb_ref(p(x) − p(α))}| for each column,
    with b_ref the one of b_m, b_{m+1} of larger Re λb. Reported, not asserted.
    """
    ls = system.large
    if ls is None:
        raise DomainError("growth envelopes are defined for large-sector systems")
    b = system.spec.b
    lam = system.lam
    candidates = [b[ls.m - 1], b[ls.m] if ls.m < ls.n else b[ls.n - 1]]
    ref = max(candidates, key=lambda v: (lam * v).real)
    out = {}
    for col in system.columns:
        x = col.z.grid.points()
        shift = (lam * col.ctx.omega - lam * ref) * (col.ctx.phase(x) - float(col.ctx.phase(system.alpha)))
        values = np.abs(col.normalised(x)) * np.exp(shift.real)[:, None]
        constant = float(np.max(values))
        out[f"envelope_u{col.index + 1}"] = _check(np.isfinite(constant), constant, reference=[ref.real, ref.imag])
    return out


def overlap_agreement(
    spec: SystemSpec,
    alpha: float,
    m: int,
    lam: complex,
    kernel_settings: Optional[KernelSettings] = None,
    picard_settings: Optional[PicardSettings] = None,
) -> float:
    """
    Sup-norm gap between the Λ-side and Γ-side solutions at a λ in both closures.

    Both are compared in the normalisation e^{λω*(p − p(α))} with ω* the
    reference point of larger Re λω.

    Raises:
        SectorError: If λ is not in the closure of Λ and of Γ_1 or Γ_σ
    """
    lam = complex(lam)
    ls = large_sector(spec.b, m, quarter_planes=spec.n == 2)
    if not ls.lam.contains(lam):
        raise SectorError(f"λ={lam} is outside the closure of Λ")
    if ls.gamma1.contains(lam):
        other = "gamma1"
    elif ls.gamma_sigma.contains(lam):
        other = "gamma_sigma"
    else:
        raise SectorError(f"λ={lam} is in Λ but in neither half of Ω_{m}")
    inner = build_large_sector(spec, alpha, m, lam, kernel_settings, picard_settings, side="lambda")
    outer = build_large_sector(spec, alpha, m, lam, kernel_settings, picard_settings, side=other)
    omegas = [ls.omega_for("lambda"), ls.omega_for(other)]
    top = max(omegas, key=lambda v: (lam * v).real)
    gap = 0.0
    for a, b in zip(inner.columns, outer.columns):
        x = a.z.grid.points()
        dp = a.ctx.phase(x) - float(a.ctx.phase(alpha))
        ua = a.normalised(x) * np.exp(lam * (a.ctx.omega - top) * dp)[:, None]
        ub = b.normalised(x) * np.exp(lam * (b.ctx.omega - top) * dp)[:, None]
        gap = max(gap, float(np.max(np.abs(ua - ub))))
    logger.info(f"Overlap gap for Ω_{m} at λ={lam:.6g}: {gap:.3e}")
    return gap


def supplement_fss(large: SolutionSystem, fss: SolutionSystem) -> SolutionSystem:
    """
    The first m − 1 FSS columns followed by u_m, …, u_n.

    Raises:
        DomainError: If the systems do not share (spec, α, λ)
        SectorError: If λ is in neither half of Ω_m
        DegeneracyError: If the determinant at α is below the degeneracy tolerance
    """
    ls = large.large
    if ls is None or fss.kind != "fss":
        raise DomainError("supplement_fss needs a large-sector system and an FSS")
    if large.spec.fingerprint != fss.spec.fingerprint or large.alpha != fss.alpha or large.lam != fss.lam:
        raise DomainError("systems differ in spec, α or λ")
    if not (ls.gamma1.contains(large.lam) or ls.gamma_sigma.contains(large.lam)):
        raise SectorError(f"λ={large.lam} is in neither Γ_1 nor Γ_σ")
    head = [c for c in fss.columns if c.index < ls.m - 1]
    system = SolutionSystem(
        large.spec, large.alpha, large.lam, "supplemented", f"{fss.region}+{large.region}", head + large.columns,
        large=ls, side=large.side,
    )
    det = complex(np.linalg.det(system.at_alpha()))
    tol = TOLERANCES["degeneracy"]
    system.checks = {"determinant_at_alpha": _check(abs(det) > tol, abs(det))}
    if abs(det) <= tol:
        raise DegeneracyError(f"supplemented determinant {abs(det):.3e} at λ={large.lam}")
    return system


def verify_integral_residual(system: SolutionSystem) -> float:
    """Largest re-substitution residual of the defining integral equations over all columns."""
    worst = 0.0
    for col in system.columns:
        worst = max(worst, integral_residual(col.ctx, col.lam, col.z, col.w))
    return worst


def perturb_column(system: SolutionSystem, column: int, component: int, delta: complex) -> SolutionSystem:
    """Copy of ``system`` with ``delta`` added to one component of one column's z."""
    col = system.columns[column]
    z = col.z
    edges, nodes = z.edge_values.copy(), z.node_values.copy()
    edges[component] += delta
    nodes[component] += delta
    columns = list(system.columns)
    columns[column] = replace(col, z=BoundedContinuousVector(z.grid, edges, nodes))
    return replace(system, columns=columns)


@dataclass
class AnalyticityReport:
    center: complex
    radius: float
    defect: float
    reconstruction_error: float
    scale: float
    rtol: float

    @property
    def passed(self) -> bool:
        limit = self.rtol * max(self.scale, 1e-300)
        return self.defect <= limit and self.reconstruction_error <= limit

    def to_dict(self) -> Dict[str, Any]:
        return {
            "center_re": self.center.real,
            "center_im": self.center.imag,
            "radius": self.radius,
            "defect": self.defect,
            "reconstruction_error": self.reconstruction_error,
            "scale": self.scale,
            "passed": self.passed,
        }


def verify_analyticity(
    f: Callable[[complex], complex],
    center: complex,
    radius: float,
    nodes: int = ANALYTICITY["nodes"],
    rtol: float = ANALYTICITY["rtol"],
) -> AnalyticityReport:
    """
    Cauchy test on the circle |λ − center| = radius with the trapezoid rule:
    |∮ f dλ| and |f(center) − mean of f on the circle|.
    """
    if radius <= 0:
        raise DomainError("radius must be positive")
    center = complex(center)
    theta = 2 * np.pi * np.arange(nodes) / nodes
    ring = center + radius * np.exp(1j * theta)
    values = np.array([complex(f(complex(lam))) for lam in ring])
    defect = abs(np.sum(values * 1j * (ring - center)) * 2 * np.pi / nodes)
    reconstruction = abs(complex(f(center)) - np.mean(values))
    scale = float(np.max(np.abs(values)))
    report = AnalyticityReport(center, float(radius), float(defect), float(reconstruction), scale, rtol)
    logger.debug(f"Cauchy test at {center:.4g} (r={radius}): defect {defect:.3e}, scale {scale:.3e}")
    return report


def entry_function(
    builder: Callable[[complex], SolutionSystem], j: int, k: int, x0: float
) -> Callable[[complex], complex]:
    """λ ↦ entry (j, k) (0-based, original numbering) of the built system at x0."""

    def f(lam: complex) -> complex:
        system = builder(lam)
        return complex(system.matrix(np.array([x0]))[0, j, k])

    return f


def sample_overlap(ls: LargeSector, side: str, count: int, radius: Union[float, Sequence[float]], seed: int = 0) -> List[complex]:
    """Random λ in the closure of Λ ∩ ``side`` at the given radius (or radii)."""
    region = ls.region_for(side)
    lo, hi = max(ls.lam.lo, region.lo), min(ls.lam.hi, region.hi)
    if lo > hi:
        raise SectorError(f"Λ does not meet {region.label}")
    rng = np.random.default_rng(seed)
    radii = np.broadcast_to(np.asarray(radius, dtype=float), (count,))
    return [complex(r * np.exp(1j * a)) for r, a in zip(radii, rng.uniform(lo, hi, count))]


__all__ = [
    "AnalyticityReport",
    "SolutionColumn",
    "SolutionSystem",
    "build_fss",
    "build_large_sector",
    "clear_context_cache",
    "entry_function",
    "extract_residuals",
    "growth_envelope",
    "overlap_agreement",
    "perturb_column",
    "residual_sup",
    "sample_overlap",
    "supplement_fss",
    "verify_analyticity",
    "verify_integral_residual",
]
