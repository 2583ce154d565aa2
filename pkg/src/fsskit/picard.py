"""
The integral operator 𝒱_k(λ), its norm bounds, and successive approximations.

For z ∈ BC_n on [α, ∞) the operator returns

    f_j(x) = −Σ_l ∫_x^∞ v_jl(t) e^{β_j(p(x) − p(t))} z_l(t) dt,   j < k,
    f_j(x) =  Σ_l ∫_α^x v_jl(t) e^{β_j(p(x) − p(t))} z_l(t) dt,   j ≥ k,

with v = Q + R(λ) and β_j = λ(b_j − ω). Vectors are held at the panel edges
and Gauss–Legendre nodes of the kernel grid; integrals to ∞ stop at T_cut.
"""
import math
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT_CONFIG, get_logger
from .errors import CertificateError, DivergenceError, DomainError, SearchError, ThresholdError
from .kernels import KernelContext, KernelSettings, ThetaEstimate, theta_sup
from .propagator import choose_cutoff, conjugate, propagator_for
from .quadrature import PanelGrid, discounted_cumsum
from .sectors import Sector, compute_sectors
from .system import SystemSpec, gamma_K_phi, kernel_mass

logger = get_logger("Picard")

PICARD_DEFAULTS = DEFAULT_CONFIG["picard"]


@dataclass(frozen=True)
class PicardSettings:
    """Iteration and threshold-search parameters."""

    eps_fix: float = PICARD_DEFAULTS["eps_fix"]
    max_iter: int = PICARD_DEFAULTS["max_iter"]
    contraction_limit: float = PICARD_DEFAULTS["contraction_limit"]
    refine_tol: float = PICARD_DEFAULTS["refine_tol"]
    search_floor: float = PICARD_DEFAULTS["search_floor"]
    search_ceiling: float = PICARD_DEFAULTS["search_ceiling"]
    search_samples: int = PICARD_DEFAULTS["search_samples"]
    search_rtol: float = PICARD_DEFAULTS["search_rtol"]

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "PicardSettings":
        section = config.get("picard", {})
        return cls(**{k: section[k] for k in cls.__dataclass_fields__ if k in section})


class BoundedContinuousVector:
    """
    A vector function z on [α, T_cut] sampled at panel edges and nodes.

    ``source`` (x ↦ array (n, len(x))), when present, lets the vector be
    re-sampled exactly on another grid.
    """

    def __init__(
        self,
        grid: PanelGrid,
        edge_values: np.ndarray,
        node_values: np.ndarray,
        source: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self.grid = grid
        self.edge_values = np.asarray(edge_values, dtype=complex)
        self.node_values = np.asarray(node_values, dtype=complex)
        self.source = source
        if self.edge_values.shape[1:] != (grid.num_panels + 1,) or self.node_values.shape[1:] != grid.nodes.shape:
            raise DomainError("vector samples do not match the grid")

    @classmethod
    def from_function(cls, grid: PanelGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "BoundedContinuousVector":
        return cls(grid, fn(grid.edges), fn(grid.nodes), source=fn)

    @classmethod
    def unit(cls, grid: PanelGrid, n: int, k: int) -> "BoundedContinuousVector":
        """The constant vector e_k."""

        def fn(x: np.ndarray) -> np.ndarray:
            x = np.asarray(x, dtype=float)
            out = np.zeros((n,) + x.shape, dtype=complex)
            out[k] = 1.0
            return out

        return cls.from_function(grid, fn)

    @classmethod
    def zeros(cls, grid: PanelGrid, n: int) -> "BoundedContinuousVector":
        return cls.from_function(grid, lambda x: np.zeros((n,) + np.shape(x), dtype=complex))

    @property
    def n(self) -> int:
        return self.edge_values.shape[0]

    def sup_norm(self) -> float:
        """max_j sup_x |z_j(x)| over the samples."""
        return float(max(np.max(np.abs(self.edge_values), initial=0.0), np.max(np.abs(self.node_values), initial=0.0)))

    def component_sup(self) -> np.ndarray:
        return np.maximum(np.max(np.abs(self.edge_values), axis=1), np.max(np.abs(self.node_values), axis=(1, 2)))

    def interpolate(self, x: np.ndarray) -> np.ndarray:
        """Values at x ∈ [α, T_cut], shape (n,) + x.shape."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        shape = x.shape
        x = x.ravel()
        if np.any(x < self.grid.start - 1e-12) or np.any(x > self.grid.end + 1e-12):
            raise DomainError(f"points outside [{self.grid.start}, {self.grid.end}]")
        if self.source is not None:
            return self.source(x).reshape((-1,) + shape)
        out = self.grid.interpolate(self.node_values, x)
        edges = self.grid.edges
        idx = np.clip(np.searchsorted(edges, x), 0, edges.size - 1)
        hit = np.abs(edges[idx] - x) <= 1e-12 * np.maximum(1.0, np.abs(x))
        out[:, hit] = self.edge_values[:, idx[hit]]
        return out.reshape((-1,) + shape)

    def on_grid(self, grid: PanelGrid) -> "BoundedContinuousVector":
        """Re-sample on another grid over the same interval."""
        if self.source is not None:
            return BoundedContinuousVector.from_function(grid, self.source)
        return BoundedContinuousVector(grid, self.interpolate(grid.edges), self.interpolate(grid.nodes))

    def samples(self) -> Tuple[np.ndarray, np.ndarray]:
        """All sample points in increasing order and the values there, shape (n, N)."""
        return self.grid.points(), self.grid.merge(self.edge_values, self.node_values)

    def _combine(self, other: "BoundedContinuousVector", sign: float) -> "BoundedContinuousVector":
        if other.grid is not self.grid:
            raise DomainError("vectors live on different grids")
        return BoundedContinuousVector(
            self.grid, self.edge_values + sign * other.edge_values, self.node_values + sign * other.node_values
        )

    def __add__(self, other: "BoundedContinuousVector") -> "BoundedContinuousVector":
        return self._combine(other, 1.0)

    def __sub__(self, other: "BoundedContinuousVector") -> "BoundedContinuousVector":
        return self._combine(other, -1.0)

    def __mul__(self, factor: complex) -> "BoundedContinuousVector":
        return BoundedContinuousVector(self.grid, self.edge_values * factor, self.node_values * factor)

    __rmul__ = __mul__

    def __neg__(self) -> "BoundedContinuousVector":
        return self * -1.0


def exponential_source(ctx: KernelContext, grid: PanelGrid, mu: complex, k: int) -> BoundedContinuousVector:
    """w = e^{μ(p(x) − p(α))}e_k."""
    n = ctx.spec.n
    p_alpha = float(ctx.phase(ctx.alpha))

    def fn(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros((n,) + x.shape, dtype=complex)
        out[k] = np.exp(mu * (ctx.phase(x) - p_alpha))
        return out

    return BoundedContinuousVector.from_function(grid, fn)


class PicardOperator:
    """
    𝒱_k(λ) discretised on a panel grid.

    Per-panel partial integrals use the sub-panel rules of :class:`PanelGrid`;
    whole-panel contributions are accumulated with discounted sums.
    """

    def __init__(self, ctx: KernelContext, lam: complex, grid: Optional[PanelGrid] = None):
        self.ctx = ctx
        self.lam = ctx.check(lam)
        if grid is None:
            data = ctx.grid_data(self.lam)
            grid = data.grid
            self.v = ctx.v_nodes(data, self.lam)
        else:
            self.v = conjugate(ctx.propagator, ctx.off, grid.nodes)
            for j in range(ctx.spec.n):
                for l in range(ctx.spec.n):
                    if ctx.spec.same_block(j, l):
                        self.v[..., j, l] = 0.0
            for order, c in enumerate(ctx.spec.C, start=1):
                self.v = self.v + conjugate(ctx.propagator, c, grid.nodes) * self.lam ** (-order)
        self.grid = grid
        self.beta = ctx.betas(self.lam)
        self.is_zero = not np.any(self.v)
        self._weights: Dict[int, np.ndarray] = {}

    def _partial_weights(self, j: int) -> np.ndarray:
        """Wf (j ≥ k) or Wb (j < k) of shape (P, g, g) for the partial-panel integrals."""
        if j not in self._weights:
            forward = j >= self.ctx.k
            psub, wsub, L = self.grid.sub_forward if forward else self.grid.sub_backward
            pn = self.grid.node_phase
            E = wsub * np.exp(self.beta[j] * (pn[:, :, None] - psub))
            self._weights[j] = np.einsum("mhr,hrg->mhg", E, L)
        return self._weights[j]

    def apply(self, z: BoundedContinuousVector) -> BoundedContinuousVector:
        """𝒱_k(λ)z on the operator grid."""
        grid = self.grid
        if z.grid is not grid:
            raise DomainError("vector is not sampled on the operator grid")
        n = self.ctx.spec.n
        edges = np.zeros((n, grid.num_panels + 1), dtype=complex)
        nodes = np.zeros((n,) + grid.nodes.shape, dtype=complex)
        if self.is_zero:
            return BoundedContinuousVector(grid, edges, nodes)
        u = np.einsum("pgjl,lpg->jpg", self.v, z.node_values)
        P = grid.edge_phase
        pn = grid.node_phase
        dP = grid.dphase
        w = grid.weights
        for j in range(n):
            if not np.any(u[j]):
                continue
            beta = self.beta[j]
            W = self._partial_weights(j)
            partial = np.einsum("mhg,mg->mh", W, u[j])
            if j >= self.ctx.k:
                J = np.sum(w * np.exp(beta * (P[1:, None] - pn)) * u[j], axis=-1)
                F = np.concatenate([[0.0], discounted_cumsum(J, beta * dP)])
                edges[j] = F
                nodes[j] = np.exp(beta * (pn - P[:-1, None])) * F[:-1, None] + partial
            else:
                K = np.sum(w * np.exp(beta * (P[:-1, None] - pn)) * u[j], axis=-1)
                G = np.append(discounted_cumsum(K, -beta * dP, reverse=True), 0.0)
                edges[j] = -G
                nodes[j] = -(np.exp(beta * (pn - P[1:, None])) * G[1:, None] + partial)
        return BoundedContinuousVector(grid, edges, nodes)


def apply_V(ctx: KernelContext, z: BoundedContinuousVector, lam: complex) -> BoundedContinuousVector:
    """
    𝒱_k(λ)z for z sampled on ``ctx.grid_data(λ).grid`` (or any grid z carries).

    Raises:
        DomainError: If λ = 0 or z is on a foreign grid
        OrderingError: If the ordering fails at λ
    """
    lam = ctx.check(lam)
    data_grid = ctx.grid_data(lam).grid
    op = PicardOperator(ctx, lam, None if z.grid is data_grid else z.grid)
    return op.apply(z)


@dataclass
class ContractionBound:
    """Computable bounds on ‖𝒱‖ and ‖𝒱²‖ at one λ."""

    bound_V: float
    bound_V2: float
    gamma: float
    theta: float
    kernel_mass: float
    a: float
    theta_estimate: Optional[ThetaEstimate] = None

    @property
    def series_constant(self) -> float:
        """N = (1 + ‖𝒱‖)(1 + ‖𝒱²‖)/(1 − ‖𝒱²‖), finite only when ‖𝒱²‖ < 1."""
        if self.bound_V2 >= 1.0:
            return math.inf
        return (1.0 + self.bound_V) / (1.0 - self.bound_V2) * (1.0 + self.bound_V2)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bound_V": self.bound_V,
            "bound_V2": self.bound_V2,
            "gamma": self.gamma,
            "theta": self.theta,
            "kernel_mass": self.kernel_mass,
            "a": self.a,
        }


def contraction_bound(ctx: KernelContext, lam: complex, refine: bool = True) -> ContractionBound:
    """
    bound_V = n e^{2a}(γ_α(λ) + a) and bound_V2 = n²e^{2a}K(e^{2a}γ_α(λ) + θ_α(λ)),
    K = γ_α(λ) + max‖(A − D)_jl‖_{L[α,∞)}.
    """
    lam = ctx.check(lam)
    spec = ctx.spec
    n = spec.n
    a = spec.a_norm
    e2a = math.exp(2 * a)
    gamma = gamma_K_phi(spec, ctx.alpha, lam).gamma
    mass = kernel_mass(spec, ctx.alpha, lam)
    estimate = theta_sup(ctx, lam, refine=refine)
    bound_V = n * e2a * (gamma + a)
    bound_V2 = n * n * e2a * mass * (e2a * gamma + estimate.value)
    return ContractionBound(bound_V, bound_V2, gamma, estimate.value, mass, a, estimate)


@dataclass
class PicardCertificate:
    """Outcome of one successive-approximation solve."""

    lam: complex
    alpha: float
    k: int
    omega: complex
    iterations: int
    residual: float
    ratio: float
    bound: ContractionBound
    series_constant: float
    norm_z: float
    norm_w: float
    correction: float
    correction_bound: float
    integral_residual: float
    refined: bool

    @property
    def bound_V2(self) -> float:
        return self.bound.bound_V2

    def to_dict(self) -> Dict[str, Any]:
        return {
            "lambda_re": self.lam.real,
            "lambda_im": self.lam.imag,
            "alpha": self.alpha,
            "k": self.k + 1,
            "omega_re": self.omega.real,
            "omega_im": self.omega.imag,
            "iterations": self.iterations,
            "residual": self.residual,
            "ratio": self.ratio,
            "series_constant": self.series_constant,
            "norm_z": self.norm_z,
            "norm_w": self.norm_w,
            "correction": self.correction,
            "correction_bound": self.correction_bound,
            "integral_residual": self.integral_residual,
            "refined": self.refined,
            **self.bound.to_dict(),
        }


def integral_residual(
    ctx: KernelContext,
    lam: complex,
    z: BoundedContinuousVector,
    w: BoundedContinuousVector,
    factor: int = 4,
) -> float:
    """
    sup over the edges of z's grid of |w + 𝒱z − z|, with 𝒱 re-applied on a
    grid refined ``factor`` times.
    """
    fine = z.grid.refine(factor)
    op = PicardOperator(ctx, lam, fine)
    image = op.apply(z.on_grid(fine))
    w_fine = w.on_grid(fine)
    coarse = slice(None, None, factor)
    diff = w_fine.edge_values[:, coarse] + image.edge_values[:, coarse] - z.edge_values
    return float(np.max(np.abs(diff), initial=0.0))


def two_step_ratio(increments: Sequence[float], floor: float = 1e-12) -> float:
    """max δ_{i+2}/δ_i over increments δ_i above ``floor``."""
    ratios = [increments[i + 2] / increments[i] for i in range(len(increments) - 2) if increments[i] > floor]
    return max(ratios, default=0.0)


def _iterate(
    op: PicardOperator, w: BoundedContinuousVector, start: BoundedContinuousVector, settings: PicardSettings
) -> Tuple[BoundedContinuousVector, List[float]]:
    z = start
    increments: List[float] = []
    for _ in range(settings.max_iter):
        nxt = w + op.apply(z)
        delta = (nxt - z).sup_norm()
        increments.append(delta)
        z = nxt
        if delta <= settings.eps_fix * max(1.0, w.sup_norm()):
            return z, increments
    raise DivergenceError(
        f"no convergence after {settings.max_iter} iterations (last increment {increments[-1]:.3e})"
    )


def solve_fixed_point(
    ctx: KernelContext,
    w: BoundedContinuousVector,
    lam: complex,
    settings: Optional[PicardSettings] = None,
    start: Optional[BoundedContinuousVector] = None,
    bound: Optional[ContractionBound] = None,
) -> Tuple[BoundedContinuousVector, PicardCertificate]:
    """
    Solve z = w + 𝒱_k(λ)z by successive approximations.

    Args:
        w: Source on ``ctx.grid_data(λ).grid``
        start: Initial iterate (defaults to w)
        bound: Precomputed contraction bound at λ

    Raises:
        ThresholdError: If bound_V2 ≥ contraction_limit; ``hint`` carries the ray threshold
        DivergenceError: If the iteration cap is reached
        CertificateError: If ‖z‖ exceeds N‖w‖ or ‖z − w‖ exceeds N‖𝒱w‖
    """
    settings = settings or PicardSettings()
    lam = ctx.check(lam)
    started = time.perf_counter()
    if bound is None:
        bound = contraction_bound(ctx, lam)
    if bound.bound_V2 >= settings.contraction_limit:
        hint = None
        try:
            hint = ray_threshold(ctx, lam / abs(lam), settings, refine=False)
        except CertificateError:
            pass
        raise ThresholdError(
            f"‖𝒱²‖ bound {bound.bound_V2:.4f} ≥ {settings.contraction_limit} at λ={lam:.6g}"
            + (f"; try |λ| > {hint:.4g}" if hint is not None else ""),
            bound=bound.bound_V2,
            hint=hint,
        )

    op = PicardOperator(ctx, lam, w.grid if w.grid is not ctx.grid_data(lam).grid else None)
    z, increments = _iterate(op, w, start if start is not None else w, settings)
    residual = integral_residual(ctx, lam, z, w)
    refined = False
    if residual > settings.refine_tol:
        logger.info(f"Refining grid at λ={lam:.6g}: integral residual {residual:.3e}")
        fine = w.grid.refine(2)
        w = w.on_grid(fine)
        op = PicardOperator(ctx, lam, fine)
        z, increments = _iterate(op, w, z.on_grid(fine), settings)
        residual = integral_residual(ctx, lam, z, w)
        refined = True

    N = bound.series_constant
    norm_z, norm_w = z.sup_norm(), w.sup_norm()
    if norm_z > N * norm_w * (1 + 1e-9) + 1e-12:
        raise CertificateError(f"‖z‖ = {norm_z:.6e} exceeds N‖w‖ = {N * norm_w:.6e}")
    correction = (z - w).sup_norm()
    correction_bound = N * op.apply(w).sup_norm()
    if correction > correction_bound * (1 + 1e-9) + 1e-12:
        raise CertificateError(
            f"‖z − w‖ = {correction:.6e} exceeds N‖𝒱w‖ = {correction_bound:.6e}"
        )
    cert = PicardCertificate(
        lam=lam,
        alpha=ctx.alpha,
        k=ctx.k,
        omega=ctx.omega,
        iterations=len(increments),
        residual=increments[-1],
        ratio=two_step_ratio(increments),
        bound=bound,
        series_constant=N,
        norm_z=norm_z,
        norm_w=norm_w,
        correction=correction,
        correction_bound=correction_bound,
        integral_residual=residual,
        refined=refined,
    )
    logger.info(
        f"Solved z at λ={lam:.6g}, k={ctx.k + 1}: {cert.iterations} iterations",
        extra={
            "lam": str(lam),
            "k": ctx.k,
            "iterations": cert.iterations,
            "residual": residual,
            "seconds": time.perf_counter() - started,
        },
    )
    return z, cert


def ray_threshold(
    ctx: KernelContext, direction: complex, settings: Optional[PicardSettings] = None, refine: bool = False
) -> float:
    """
    Smallest radius r on the ray λ = r·u such that bound_V2 < limit at every
    sampled radius ≥ r, by a geometric scan from the ceiling followed by bisection.

    Raises:
        SearchError: If the bound fails already at the search ceiling
    """
    settings = settings or PicardSettings()
    direction = complex(direction)
    if direction == 0:
        raise DomainError("ray direction must be nonzero")
    unit = direction / abs(direction)

    def admissible(r: float) -> bool:
        return contraction_bound(ctx, r * unit, refine=refine).bound_V2 < settings.contraction_limit

    ceiling, floor = settings.search_ceiling, settings.search_floor
    if not admissible(ceiling):
        raise SearchError(f"bound_V2 ≥ {settings.contraction_limit} at the search ceiling |λ| = {ceiling}")
    radii = np.geomspace(ceiling, floor, settings.search_samples)
    last_ok = ceiling
    for r in radii[1:]:
        if admissible(float(r)):
            last_ok = float(r)
            continue
        lo, hi = float(r), last_ok
        while hi / lo > 1.0 + settings.search_rtol:
            mid = math.sqrt(lo * hi)
            if admissible(mid):
                hi = mid
            else:
                lo = mid
        return hi
    return floor


def estimate_lambda_alpha(
    ctx: KernelContext,
    rays: Sequence[complex],
    settings: Optional[PicardSettings] = None,
    refine: bool = False,
) -> float:
    """
    Empirical threshold λ_α: the largest :func:`ray_threshold` over ``rays``.

    Raises:
        DomainError: If ``rays`` is empty
        SearchError: If some ray admits no radius up to the ceiling
    """
    if not rays:
        raise DomainError("estimate_lambda_alpha needs at least one ray")
    values = [ray_threshold(ctx, u, settings, refine) for u in rays]
    logger.info(f"λ_α at α={ctx.alpha}, k={ctx.k + 1}: {max(values):.4g} over {len(values)} rays")
    return max(values)


def sector_contexts(
    spec: SystemSpec,
    alpha: float,
    sector: Sector,
    kernel_settings: Optional[KernelSettings] = None,
) -> Tuple[SystemSpec, List[KernelContext]]:
    """
    The renumbered system for ``sector`` and one kernel context per pivot k,
    all sharing one propagator.
    """
    ordered = spec.permuted(sector.permutation)
    t_cut = choose_cutoff(ordered, alpha)
    propagator = propagator_for(ordered, alpha, t_cut)
    contexts = [
        KernelContext(ordered, alpha, k, region=sector, settings=kernel_settings, t_cut=t_cut, propagator=propagator)
        for k in range(spec.n)
    ]
    return ordered, contexts


def fss_threshold(
    spec: SystemSpec,
    alpha: float,
    rays: Sequence[complex],
    kernel_settings: Optional[KernelSettings] = None,
    picard_settings: Optional[PicardSettings] = None,
    quarter_planes: bool = False,
) -> float:
    """
    λ_α for the whole FSS: the largest ray threshold over ``rays`` and all pivots,
    each ray using the sector that contains it.
    """
    if not rays:
        raise DomainError("fss_threshold needs at least one ray")
    geometry = compute_sectors(spec.b, quarter_planes)
    contexts: Dict[int, List[KernelContext]] = {}
    best = 0.0
    for u in rays:
        sector = geometry.find(u)
        if sector.kappa not in contexts:
            contexts[sector.kappa] = sector_contexts(spec, alpha, sector, kernel_settings)[1]
        for ctx in contexts[sector.kappa]:
            best = max(best, ray_threshold(ctx, u, picard_settings))
    logger.info(f"FSS threshold at α={alpha}: {best:.4g} over {len(rays)} rays")
    return best


def default_rays(count: int) -> List[complex]:
    """``count`` unit directions at angles 2π(i + ½)/count."""
    return [complex(np.exp(2j * np.pi * (i + 0.5) / count)) for i in range(count)]


__all__ = [
    "BoundedContinuousVector",
    "ContractionBound",
    "PicardCertificate",
    "PicardOperator",
    "PicardSettings",
    "apply_V",
    "contraction_bound",
    "default_rays",
    "estimate_lambda_alpha",
    "exponential_source",
    "fss_threshold",
    "integral_residual",
    "ray_threshold",
    "sector_contexts",
    "solve_fixed_point",
    "two_step_ratio",
]
