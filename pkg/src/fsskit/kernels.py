"""
Oscillatory kernels ν_jl, κ_jl and their suprema θ_α(λ), Ψ(λ).

For a pivot k and reference point ω, with β_j = λ(b_j − ω) and
λg_jl(s, x, t) = β_l(p(t) − p(s)) + β_j(p(x) − p(t)),

    ν_jl(s, x, λ) = ∫_{t₁}^{t₂} q_jl(t) e^{λg_jl} dt,  κ_jl likewise with r_jl,

where (t₁, t₂) is (x, s) for j, l < k; (max(s, x), ∞) for j < k ≤ l;
(α, min(s, x)) for l < k ≤ j; and (s, x) for k ≤ j, l. Empty ranges give 0.

Whole (s, x) tables are built with one discounted sweep over the panels per
row, so every exponential that is formed has modulus ≤ 1.
"""
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from scipy import integrate, optimize

from .coeffs import CoefficientFunction
from .config import DEFAULT_CONFIG, get_logger
from .errors import DomainError, NumericalError, OrderingError, SectorError
from .propagator import PropagatorMatrix, choose_cutoff, conjugate, propagator_for
from .quadrature import PanelGrid, build_panels, discounted_cumsum
from .sectors import Sector, ordering_margin, sample_closure
from .system import SystemSpec, laurent_entries, max_entry_l1, off_block

logger = get_logger("Kernels")

KERNEL_DEFAULTS = DEFAULT_CONFIG["kernels"]
TOLERANCES = DEFAULT_CONFIG["tolerances"]

# Case numbers follow the integration-range rule in the module docstring.
BELOW_BELOW, BELOW_ABOVE, ABOVE_BELOW, ABOVE_ABOVE = 1, 2, 3, 4


@dataclass(frozen=True)
class KernelSettings:
    """Resolution of the kernel quadrature and of the supremum search."""

    grid_size: int = KERNEL_DEFAULTS["grid_size"]
    refine_cells: int = KERNEL_DEFAULTS["refine_cells"]
    gl_order: int = KERNEL_DEFAULTS["gl_order"]
    phase_cap: float = KERNEL_DEFAULTS["phase_cap"]
    h_max: float = KERNEL_DEFAULTS["h_max"]

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "KernelSettings":
        section = config.get("kernels", {})
        return cls(**{k: section[k] for k in cls.__dataclass_fields__ if k in section})


def case_of(j: int, l: int, k: int) -> int:
    """Integration-range case for the pair (j, l) and pivot k (0-based)."""
    if j < k and l < k:
        return BELOW_BELOW
    if j < k <= l:
        return BELOW_ABOVE
    if l < k <= j:
        return ABOVE_BELOW
    return ABOVE_ABOVE


def integration_range(case: int, s: float, x: float, alpha: float, end: float) -> Tuple[float, float]:
    """(t₁, t₂) for the case; ∞ is replaced by ``end``."""
    if case == BELOW_BELOW:
        return x, s
    if case == BELOW_ABOVE:
        return max(s, x), end
    if case == ABOVE_BELOW:
        return alpha, min(s, x)
    return s, x


def sample_points(phase_fn: Callable, phase_inverse: Callable, start: float, end: float, size: int) -> np.ndarray:
    """``size`` points of [start, end] clustered quadratically towards ``start`` in the phase variable."""
    u = np.linspace(0.0, 1.0, size)
    p0, p1 = float(phase_fn(start)), float(phase_fn(end))
    pts = np.asarray(phase_inverse(p0 + (p1 - p0) * u ** 2), dtype=float)
    pts[0], pts[-1] = start, end
    return np.maximum.accumulate(pts)


def span_nodes(grid: PanelGrid, t1: float, t2: float) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes and weights on [t1, t2] following the panel edges of ``grid``."""
    if not t2 > t1:
        return np.zeros(0), np.zeros(0)
    inner = grid.edges[(grid.edges > t1) & (grid.edges < t2)]
    edges = np.concatenate([[t1], inner, [t2]])
    widths = np.diff(edges)
    nodes = edges[:-1, None] + widths[:, None] * grid.ref_nodes[None, :]
    weights = widths[:, None] * grid.ref_weights[None, :]
    return nodes.ravel(), weights.ravel()


# ---------------------------------------------------------------------------
# (s, x) tables


def kernel_table(
    grid: PanelGrid,
    values: np.ndarray,
    beta_j: complex,
    beta_l: complex,
    case: int,
    sample_idx: np.ndarray,
) -> np.ndarray:
    """
    ν(s, x) for s, x running over the panel edges ``sample_idx``.

    Args:
        values: Kernel density at the grid nodes, shape (P, g)
        case: One of the four integration-range cases

    Returns:
        Table with ``table[a, b] = ν(edge[sample_idx[a]], edge[sample_idx[b]])``
    """
    P = grid.edge_phase
    pn = grid.node_phase
    dP = grid.dphase
    w = grid.weights * values
    idx = np.asarray(sample_idx)
    G = idx.size
    S = P[idx][:, None]
    X = P[idx][None, :]

    if case == BELOW_ABOVE:
        c = beta_l - beta_j
        I = np.sum(w * np.exp(c * (pn - P[:-1, None])), axis=-1)
        tail = np.append(discounted_cumsum(I, c * dP, reverse=True), 0.0)
        top = np.maximum(idx[:, None], idx[None, :])
        Pt = P[top]
        return np.exp(beta_j * (X - Pt) + beta_l * (Pt - S)) * tail[top]

    if case == ABOVE_BELOW:
        c = beta_l - beta_j
        I = np.sum(w * np.exp(c * (pn - P[1:, None])), axis=-1)
        head = np.concatenate([[0.0], discounted_cumsum(I, -c * dP)])
        low = np.minimum(idx[:, None], idx[None, :])
        Pl = P[low]
        return np.exp(beta_j * (X - Pl) + beta_l * (Pl - S)) * head[low]

    table = np.zeros((G, G), dtype=complex)
    m = np.arange(grid.num_panels)
    if case == ABOVE_ABOVE:
        # rows: fixed s; sweep x to the right of s
        J = np.sum(w * np.exp(beta_l * (pn - P[:-1, None]) + beta_j * (P[1:, None] - pn)), axis=-1)
        for a, e in enumerate(idx):
            active = m >= e
            shift = np.where(active, P[:-1] - P[e], 0.0)
            y = discounted_cumsum(np.where(active, np.exp(beta_l * shift) * J, 0.0), beta_j * dP)
            right = idx > e
            table[a, right] = y[idx[right] - 1]
        return table

    # BELOW_BELOW: columns with fixed x; sweep s to the right of x
    K = np.sum(w * np.exp(beta_j * (P[:-1, None] - pn) + beta_l * (pn - P[1:, None])), axis=-1)
    for b, e in enumerate(idx):
        active = m >= e
        shift = np.where(active, P[e] - P[:-1], 0.0)
        y = discounted_cumsum(np.where(active, np.exp(beta_j * shift) * K, 0.0), -beta_l * dP)
        right = idx > e
        table[right, b] = y[idx[right] - 1]
    return table


# ---------------------------------------------------------------------------
# Context


@dataclass
class GridData:
    """Panels for one frequency bucket with Q and the Laurent parts of R at the nodes."""

    grid: PanelGrid
    samples: np.ndarray
    sample_idx: np.ndarray
    q_nodes: np.ndarray
    r_nodes: List[np.ndarray] = field(default_factory=list)


class KernelContext:
    """
    Kernel data for a fixed (system, α, pivot k, ω, region).

    ``spec`` must already be in the region's numbering, so that
    Re(λb_j) ≥ Re(λω) ≥ Re(λb_l) for j < k ≤ l on the closure of ``region``.
    """

    def __init__(
        self,
        spec: SystemSpec,
        alpha: float,
        k: int,
        omega: Optional[complex] = None,
        region: Optional[Sector] = None,
        settings: Optional[KernelSettings] = None,
        t_cut: Optional[float] = None,
        propagator: Optional[PropagatorMatrix] = None,
        slack: float = TOLERANCES["boundary_slack"],
    ):
        if alpha < 0:
            raise DomainError(f"α must be nonnegative, got {alpha}")
        if not 0 <= k < spec.n:
            raise DomainError(f"pivot k={k} out of range for n={spec.n}")
        self.spec = spec
        self.alpha = float(alpha)
        self.k = k
        self.omega = spec.b[k] if omega is None else complex(omega)
        self.region = region
        self.settings = settings or KernelSettings()
        self.slack = slack
        self.t_cut = t_cut if t_cut is not None else choose_cutoff(spec, alpha)
        self.propagator = propagator or propagator_for(spec, alpha, self.t_cut)
        self.off = off_block(spec)
        self.b = np.asarray(spec.b, dtype=complex)
        self._grids: Dict[float, GridData] = {}
        self._lock = threading.Lock()
        rho = spec.rho
        self.unit_phase = rho.is_constant and rho.base == 1.0
        self.phase_fn = None if self.unit_phase else rho.phase
        if region is not None:
            self._check_region()

    def _check_region(self) -> None:
        for lam in sample_closure(self.region, 257):
            margin = ordering_margin(self.spec.b, range(self.spec.n), self.omega, lam, self.k)
            if margin < -self.slack:
                raise OrderingError(
                    f"ordering fails at arg λ={np.angle(lam):.6f} in {self.region.label or self.region.kappa} "
                    f"(margin {margin:.3e})"
                )

    def phase(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x if self.phase_fn is None else self.spec.rho.phase(x)

    def betas(self, lam: complex) -> np.ndarray:
        return complex(lam) * (self.b - self.omega)

    def check(self, lam: complex) -> complex:
        """Validate λ against the region and the ordering."""
        lam = complex(lam)
        if lam == 0 or not np.isfinite(lam):
            raise DomainError("λ must be finite and nonzero")
        if self.region is not None and not self.region.contains(lam):
            raise SectorError(f"λ={lam} is outside the closure of {self.region.label or self.region.kappa}")
        margin = ordering_margin(self.spec.b, range(self.spec.n), self.omega, lam, self.k)
        if margin < -self.slack * max(1.0, abs(lam)):
            raise OrderingError(f"ordering violated at λ={lam} (margin {margin:.3e})")
        return lam

    def frequency(self, lam: complex) -> float:
        b = self.b
        spread = max(np.max(np.abs(b[:, None] - b[None, :])), np.max(np.abs(b - self.omega)))
        return abs(lam) * float(spread)

    def grid_data(self, lam: complex) -> GridData:
        """Panels resolving the oscillation at |λ| (shared by all λ in a power-of-two bucket)."""
        freq = self.frequency(lam)
        bucket = 0.0 if freq == 0 else 2.0 ** math.ceil(math.log2(freq))
        with self._lock:
            data = self._grids.get(bucket)
            if data is None:
                data = self._build_grid(bucket)
                self._grids[bucket] = data
        return data

    def _build_grid(self, frequency: float) -> GridData:
        s = self.settings
        rho = self.spec.rho
        samples = sample_points(rho.phase, rho.phase_inverse, self.alpha, self.t_cut, s.grid_size)
        grid = build_panels(
            self.alpha,
            self.t_cut,
            tuple(self.spec.knots) + tuple(samples),
            frequency,
            self.phase_fn,
            s.h_max,
            s.phase_cap,
            s.gl_order,
        )
        idx = np.array([grid.edge_index(x) for x in samples])
        nodes = grid.nodes
        q = conjugate(self.propagator, self.off, nodes)
        for j in range(self.spec.n):
            for l in range(self.spec.n):
                if self.spec.same_block(j, l):
                    q[..., j, l] = 0.0
        r = [conjugate(self.propagator, c, nodes) for c in self.spec.C]
        logger.debug(f"Kernel grid: {grid.num_panels} panels at frequency {frequency:.4g}")
        return GridData(grid, grid.edges[idx], idx, q, r)

    def r_nodes(self, data: GridData, lam: complex) -> np.ndarray:
        out = np.zeros_like(data.q_nodes)
        for order, r in enumerate(data.r_nodes, start=1):
            out = out + r * complex(lam) ** (-order)
        return out

    def v_nodes(self, data: GridData, lam: complex) -> np.ndarray:
        """V = Q + R(λ) at the grid nodes, shape (P, g, n, n)."""
        return data.q_nodes + self.r_nodes(data, lam)

    def q_tail(self) -> float:
        """Bound on max_jl ‖q_jl‖_{L[T_cut, ∞)}."""
        scale = 1.0 if self.propagator.identity else math.exp(2 * self.spec.a_norm) * self.spec.block_size ** 2
        return scale * max_entry_l1(self.off, self.t_cut)

    def theta_ceiling(self) -> float:
        """e^{2a}β²·max_jl‖(A − D)_jl‖_{L[α,∞)}."""
        return math.exp(2 * self.spec.a_norm) * self.spec.block_size ** 2 * max_entry_l1(self.off, self.alpha)

    def nonzero_pairs(self) -> List[Tuple[int, int]]:
        n = self.spec.n
        return [
            (j, l)
            for j in range(n)
            for l in range(n)
            if not self.spec.same_block(j, l) and not self.off[j][l].is_zero
        ]


# ---------------------------------------------------------------------------
# Pointwise evaluation


def eval_nu_kappa(ctx: KernelContext, j: int, l: int, s: float, x: float, lam: complex) -> Tuple[complex, complex]:
    """
    ν_jl(s, x, λ) and κ_jl(s, x, λ) by direct Gauss–Legendre quadrature.

    Raises:
        DomainError: If s or x < α, or λ = 0
        OrderingError: If Re(λg_jl) > 0 somewhere on the integration range
    """
    lam = ctx.check(lam)
    if s < ctx.alpha or x < ctx.alpha:
        raise DomainError(f"s, x must be ≥ α={ctx.alpha}")
    t1, t2 = integration_range(case_of(j, l, ctx.k), s, x, ctx.alpha, max(ctx.t_cut, s, x))
    if not t2 > t1:
        return 0j, 0j
    grid = ctx.grid_data(lam).grid
    nodes, weights = span_nodes(grid, t1, t2)
    if t2 > grid.end:
        tail_start = max(grid.end, t1)
        extra = np.linspace(tail_start, t2, max(2, int(math.ceil((t2 - tail_start) / ctx.settings.h_max)) + 1))
        tail_nodes = (extra[:-1, None] + np.diff(extra)[:, None] * grid.ref_nodes[None, :]).ravel()
        tail_weights = (np.diff(extra)[:, None] * grid.ref_weights[None, :]).ravel()
        keep = nodes < grid.end
        nodes = np.concatenate([nodes[keep], tail_nodes])
        weights = np.concatenate([weights[keep], tail_weights])
    beta = ctx.betas(lam)
    p = ctx.phase(nodes)
    ps, px = float(ctx.phase(s)), float(ctx.phase(x))
    exponent = beta[l] * (p - ps) + beta[j] * (px - p)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(exponent))))
    if np.max(exponent.real) > tol:
        raise OrderingError(f"Re(λg) = {np.max(exponent.real):.3e} > 0 for pair ({j}, {l})")
    factor = weights * np.exp(exponent)
    nu = 0j
    if not ctx.spec.same_block(j, l) and not ctx.off[j][l].is_zero:
        nu = complex(np.sum(factor * conjugate(ctx.propagator, ctx.off, nodes)[:, j, l]))
    kappa = 0j
    if ctx.spec.C:
        kappa = complex(np.sum(factor * conjugate(ctx.propagator, laurent_entries(ctx.spec, lam), nodes)[:, j, l]))
    return nu, kappa


# ---------------------------------------------------------------------------
# Suprema


class ThetaEstimate(NamedTuple):
    """θ_α(λ) estimate: ``value = max(grid, refined) + tail``."""

    value: float
    grid_value: float
    refined_value: float
    tail: float
    ceiling: float
    argmax: Optional[Tuple[int, int, float, float]]


def _top_cells(table: np.ndarray, count: int) -> List[Tuple[int, int]]:
    flat = np.argsort(np.abs(table).ravel())[::-1][:count]
    return [tuple(int(v) for v in np.unravel_index(i, table.shape)) for i in flat]


def _refine(
    value: Callable[[float, float], float], samples: np.ndarray, a: int, b: int
) -> Tuple[float, float, float]:
    """Coordinate-wise golden-section maximisation of ``value`` around samples[a], samples[b]."""
    G = samples.size
    s, x = float(samples[a]), float(samples[b])
    best = value(s, x)
    for axis in (0, 1):
        centre = a if axis == 0 else b
        lo = float(samples[max(centre - 1, 0)])
        hi = float(samples[min(centre + 1, G - 1)])
        if not hi > lo:
            continue
        if axis == 0:
            res = optimize.minimize_scalar(
                lambda t: -value(t, x), bounds=(lo, hi), method="bounded", options={"xatol": 1e-6 * (hi - lo), "maxiter": 16}
            )
            if -res.fun > best:
                best, s = -res.fun, float(res.x)
        else:
            res = optimize.minimize_scalar(
                lambda t: -value(s, t), bounds=(lo, hi), method="bounded", options={"xatol": 1e-6 * (hi - lo), "maxiter": 16}
            )
            if -res.fun > best:
                best, x = -res.fun, float(res.x)
    return best, s, x


def nu_table(ctx: KernelContext, j: int, l: int, lam: complex) -> Tuple[np.ndarray, np.ndarray]:
    """Sample points and the table ν_jl(samples[a], samples[b], λ)."""
    lam = ctx.check(lam)
    data = ctx.grid_data(lam)
    beta = ctx.betas(lam)
    if ctx.spec.same_block(j, l) or ctx.off[j][l].is_zero:
        return data.samples, np.zeros((data.samples.size,) * 2, dtype=complex)
    table = kernel_table(data.grid, data.q_nodes[..., j, l], beta[j], beta[l], case_of(j, l, ctx.k), data.sample_idx)
    return data.samples, table


def theta_sup(ctx: KernelContext, lam: complex, refine: bool = True) -> ThetaEstimate:
    """
    Estimate θ_α(λ) = sup_{j,l; s,x ≥ α} |ν_jl(s, x, λ)|.

    Grid maximum over the (s, x) samples, golden-section refinement around the
    best ``refine_cells`` cells, plus the additive tail bound ‖q‖_{L[T_cut,∞)}.

    Raises:
        DomainError: If essinf ρ on [α, ∞) is not positive
        NumericalError: If the estimate exceeds e^{2a}β²‖A − D‖_{L[α,∞)}
    """
    lam = ctx.check(lam)
    if ctx.spec.rho.essinf(ctx.alpha) <= 0:
        raise DomainError(f"θ needs essinf ρ > 0 on [{ctx.alpha}, ∞)")
    ceiling = ctx.theta_ceiling()
    pairs = ctx.nonzero_pairs()
    if not pairs:
        return ThetaEstimate(0.0, 0.0, 0.0, 0.0, ceiling, None)
    grid_value, refined, argmax = 0.0, 0.0, None
    candidates = []
    for j, l in pairs:
        samples, table = nu_table(ctx, j, l, lam)
        mags = np.abs(table)
        a, b = np.unravel_index(int(np.argmax(mags)), mags.shape)
        if mags[a, b] > grid_value:
            grid_value = float(mags[a, b])
            argmax = (j, l, float(samples[a]), float(samples[b]))
        for cell in _top_cells(table, ctx.settings.refine_cells):
            candidates.append((float(mags[cell]), j, l, cell))
    if refine and ctx.settings.refine_cells > 0:
        candidates.sort(key=lambda c: c[0], reverse=True)
        for _, j, l, (a, b) in candidates[: ctx.settings.refine_cells]:
            value, s, x = _refine(lambda s_, x_: abs(eval_nu_kappa(ctx, j, l, s_, x_, lam)[0]), samples, a, b)
            if value > refined:
                refined = value
                if value > grid_value:
                    argmax = (j, l, s, x)
    tail = ctx.q_tail()
    estimate = max(grid_value, refined)
    if estimate > ceiling * (1 + 1e-6) + 1e-12:
        raise NumericalError(f"θ estimate {estimate:.6e} exceeds the bound {ceiling:.6e}")
    logger.debug(f"θ(λ={lam:.4g}) = {estimate:.6e} (+ tail {tail:.2e})")
    return ThetaEstimate(estimate + tail, grid_value, refined, tail, ceiling, argmax)


def coefficient_cutoff(
    f: CoefficientFunction,
    start: float = 0.0,
    eps_tail: float = TOLERANCES["eps_tail"],
    min_span: float = TOLERANCES["min_span"],
) -> float:
    """Smallest T ≥ start + min_span with ‖f‖_{L[T,∞)} ≤ eps_tail."""
    floor = start + min_span
    if math.isfinite(f.support_end):
        return max(floor, f.support_end)
    tail = lambda T: f.l1_tail(T)[0] - eps_tail  # noqa: E731
    if tail(floor) <= 0:
        return floor
    hi = floor
    while tail(hi) > 0:
        hi = 2.0 * hi + 1.0
        if hi > 1e6:
            raise NumericalError("coefficient tail does not decay below eps_tail")
    return float(optimize.brentq(tail, floor, hi, xtol=1e-6))


def psi_sup(
    f: CoefficientFunction,
    lam: complex,
    start: float = 0.0,
    settings: Optional[KernelSettings] = None,
    refine: bool = True,
) -> float:
    """
    Ψ(λ) = sup_{s,x ≥ start} |∫_{min(s,x)}^{max(s,x)} f(t) e^{iλ|x − t|} dt| for Im λ ≥ 0.

    Raises:
        DomainError: If Im λ < 0
        NumericalError: If the estimate exceeds ‖f‖_{L[start,∞)}
    """
    lam = complex(lam)
    if lam.imag < 0:
        raise DomainError(f"Ψ needs Im λ ≥ 0, got {lam}")
    if f.is_zero:
        return 0.0
    settings = settings or KernelSettings()
    end = coefficient_cutoff(f, start)
    ident = lambda x: np.asarray(x, dtype=float)  # noqa: E731
    samples = sample_points(ident, ident, start, end, settings.grid_size)
    grid = build_panels(start, end, tuple(f.knots) + tuple(samples), abs(lam), None, settings.h_max, settings.phase_cap, settings.gl_order)
    idx = np.array([grid.edge_index(x) for x in samples])
    values = f(grid.nodes)
    right = kernel_table(grid, values, 1j * lam, 0.0, ABOVE_ABOVE, idx)
    left = kernel_table(grid, values, -1j * lam, 0.0, BELOW_BELOW, idx)
    mags = np.maximum(np.abs(right), np.abs(left))
    best = float(np.max(mags))
    if refine and settings.refine_cells > 0:

        def value(s: float, x: float) -> float:
            s, x = max(s, start), max(x, start)
            lo, hi = min(s, x), max(s, x)
            nodes, weights = span_nodes(grid, lo, hi)
            if nodes.size == 0:
                return 0.0
            return float(abs(np.sum(weights * f(nodes) * np.exp(1j * lam * np.abs(x - nodes)))))

        for a, b in _top_cells(mags, settings.refine_cells):
            best = max(best, _refine(value, samples, a, b)[0])
    l1 = f.l1_tail(start)[0]
    if best > l1 * (1 + 1e-6) + 1e-12:
        raise NumericalError(f"Ψ estimate {best:.6e} exceeds ‖f‖ = {l1:.6e}")
    return best + f.l1_tail(end)[0]


def tilde_lambda(b_j: complex, b_l: complex, lam: complex, j: int, l: int) -> complex:
    """λ̃ = iλ(b_j − b_l) for j < l and −iλ(b_j − b_l) for l < j."""
    if j == l:
        raise DomainError("λ̃ needs j ≠ l")
    value = 1j * complex(lam) * (complex(b_j) - complex(b_l))
    return value if j < l else -value


def psi_pair_bound(ctx: KernelContext, j: int, l: int, lam: complex) -> float:
    """
    Ψ_jl(λ̃) bounding sup_{s,x}|ν_jl(s, x, λ)|, for ρ ≡ 1 and M_α ≡ I.

    Raises:
        DomainError: If ρ is not the unit weight or D ≢ 0
    """
    lam = ctx.check(lam)
    if not ctx.unit_phase or not ctx.propagator.identity:
        raise DomainError("psi_pair_bound needs ρ ≡ 1 and D ≡ 0")
    if ctx.spec.same_block(j, l):
        return 0.0
    tilde = tilde_lambda(ctx.spec.b[j], ctx.spec.b[l], lam, j, l)
    return psi_sup(ctx.spec.A[j][l], complex(tilde.real, max(tilde.imag, 0.0)), start=ctx.alpha, settings=ctx.settings)


# ---------------------------------------------------------------------------
# L₂ along rays


@dataclass
class RayL2Report:
    """Partial integrals of g² along a ray at radii R/4, R/2 and R."""

    radii: Tuple[float, float, float]
    partials: Tuple[float, float, float]
    increments: Tuple[float, float]
    ratios: Tuple[float, float]
    error: float
    stable: bool

    @property
    def value(self) -> float:
        return self.partials[-1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "radii": list(self.radii),
            "partials": list(self.partials),
            "increments": list(self.increments),
            "ratios": list(self.ratios),
            "error": self.error,
            "stable": self.stable,
        }


def _ray_parameter(origin: complex, unit: complex, radius: float) -> float:
    """t ≥ 0 with |origin + t·unit| = radius (0 if the origin is already outside)."""
    proj = (origin.conjugate() * unit).real
    disc = proj * proj - abs(origin) ** 2 + radius * radius
    if disc < 0:
        return 0.0
    return max(0.0, -proj + math.sqrt(disc))


def l2_along_ray(
    g: Callable[[complex], float],
    ray: Tuple[complex, complex],
    R_max: float,
    stable_tol: float = 0.05,
    epsrel: float = 1e-8,
    limit: int = 200,
) -> RayL2Report:
    """
    ∫ g(λ)² |dλ| along λ = origin + t·u, truncated where |λ| = R_max.

    Raises:
        NumericalError: If g returns a non-finite value
    """
    origin, direction = complex(ray[0]), complex(ray[1])
    if direction == 0:
        raise DomainError("ray direction must be nonzero")
    unit = direction / abs(direction)

    def integrand(t: float) -> float:
        v = float(g(origin + t * unit))
        if not math.isfinite(v):
            raise NumericalError(f"non-finite sample at λ={origin + t * unit}")
        return v * v

    radii = (R_max / 4.0, R_max / 2.0, float(R_max))
    ts = [0.0] + [_ray_parameter(origin, unit, r) for r in radii]
    partials, total, error = [], 0.0, 0.0
    for a, b in zip(ts[:-1], ts[1:]):
        if b > a:
            value, err = integrate.quad(integrand, a, b, epsrel=epsrel, epsabs=0.0, limit=limit)
            total += value
            error += err
        partials.append(total)
    increments = (partials[1] - partials[0], partials[2] - partials[1])
    ratios = tuple(inc / p if p > 0 else 0.0 for inc, p in zip(increments, partials[:2]))
    stable = partials[2] == 0.0 or increments[1] <= stable_tol * partials[2]
    return RayL2Report(radii, tuple(partials), increments, ratios, error, stable)
