"""
The propagator M_α: M′ = D M, M(α) = I, its inverse, the conjugated kernels
Q_α = M⁻¹(A − D)M and R_α = M⁻¹ C(·, λ) M, and initial-value extensions of
solutions from x = α back to x = 0.
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize

from .cache import MemoryCache, cache_key
from .config import DEFAULT_CONFIG, get_logger
from .errors import DomainError, IntegrationError
from .system import (
    SystemSpec,
    build_D,
    evaluate_matrix,
    laurent_entries,
    max_entry_l1,
    off_block,
    system_matrix,
)

logger = get_logger("Propagator")

TOLERANCES = DEFAULT_CONFIG["tolerances"]

_PROPAGATORS = MemoryCache(max_entries=64)


def _tail_total(spec: SystemSpec, T: float) -> float:
    total = max_entry_l1(spec.A, T)
    for c in spec.C:
        total += max_entry_l1(c, T)
    return total


def choose_cutoff(
    spec: SystemSpec,
    alpha: float,
    eps_tail: float = TOLERANCES["eps_tail"],
    min_span: float = TOLERANCES["min_span"],
) -> float:
    """
    Smallest T ≥ α + min_span with Σ tails of A and C beyond T below ``eps_tail``.

    Compactly supported coefficients give T = max(α + min_span, support end).
    """
    floor = alpha + min_span
    end = max((e.support_end for m in (spec.A,) + spec.C for row in m for e in row), default=0.0)
    if math.isfinite(end):
        return max(floor, end)
    if _tail_total(spec, floor) <= eps_tail:
        return floor
    hi = floor
    while _tail_total(spec, hi) > eps_tail:
        hi = 2.0 * hi + 1.0
        if hi > 1e6:
            raise IntegrationError("coefficient tails do not decay below eps_tail")
    return float(optimize.brentq(lambda T: _tail_total(spec, T) - eps_tail, floor, hi, xtol=1e-6))


def _segments(start: float, stop: float, knots: Sequence[float]) -> List[Tuple[float, float]]:
    lo, hi = min(start, stop), max(start, stop)
    cuts = [k for k in knots if lo < k < hi]
    points = [start] + (sorted(cuts) if stop > start else sorted(cuts, reverse=True)) + [stop]
    return [(a, b) for a, b in zip(points[:-1], points[1:]) if a != b]


@dataclass
class PropagatorMatrix:
    """
    M_α and M_α⁻¹ on [0, T_cut] from piecewise dense ODE output.

    ``identity`` is set when D ≡ 0, in which case M ≡ I exactly.
    """

    spec: SystemSpec
    alpha: float
    t_cut: float
    identity: bool = False
    pieces: List[Tuple[float, float, Any]] = field(default_factory=list)
    grid: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n(self) -> int:
        return self.spec.n

    def _evaluate(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        n = self.n
        # A and C are below eps_tail past T_cut, so M is frozen there
        flat = np.clip(x.ravel(), 0.0, self.t_cut)
        M = np.broadcast_to(np.eye(n, dtype=complex), flat.shape + (n, n)).copy()
        N = M.copy()
        if not self.identity:
            for lo, hi, sol in self.pieces:
                mask = (flat >= lo) & (flat <= hi) if lo < hi else np.zeros(flat.shape, dtype=bool)
                if np.any(mask):
                    values = sol(flat[mask])
                    M[mask] = values[: n * n].T.reshape(-1, n, n)
                    N[mask] = values[n * n :].T.reshape(-1, n, n)
            anchor = flat == self.alpha
            M[anchor] = np.eye(n)
            N[anchor] = np.eye(n)
        return M.reshape(x.shape + (n, n)), N.reshape(x.shape + (n, n))

    def M(self, x: np.ndarray) -> np.ndarray:
        """M_α(x), shape x.shape + (n, n)."""
        return self._evaluate(x)[0]

    def M_inv(self, x: np.ndarray) -> np.ndarray:
        """M_α⁻¹(x) from the adjoint solve."""
        return self._evaluate(x)[1]

    def sample_points(self) -> np.ndarray:
        extra = np.linspace(0.0, self.t_cut, 201)
        return np.unique(np.concatenate([self.grid, extra, [self.alpha]]))

    def verify(self, points: Optional[np.ndarray] = None) -> Dict[str, Dict[str, Any]]:
        """
        Check the structural properties of M_α on ``points``.

        Returns:
            Mapping of check name to ``{"passed": bool, "value": float}``
        """
        spec = self.spec
        x = self.sample_points() if points is None else np.asarray(points, dtype=float)
        M, N = self._evaluate(x)
        n = self.n
        checks: Dict[str, Dict[str, Any]] = {}

        anchor = self.M(np.array([self.alpha]))[0]
        checks["identity_anchor"] = {
            "passed": bool(np.array_equal(anchor, np.eye(n))),
            "value": float(np.max(np.abs(anchor - np.eye(n)))),
        }
        det = np.abs(np.linalg.det(M))
        checks["invertible"] = {"passed": bool(np.min(det) > 1e-6), "value": float(np.min(det))}

        off = np.array([[not spec.same_block(j, k) for k in range(n)] for j in range(n)])
        block_val = float(max(np.max(np.abs(M[..., off]), initial=0.0), np.max(np.abs(N[..., off]), initial=0.0)))
        checks["block_zero"] = {"passed": block_val == 0.0, "value": block_val}

        fwd = x >= self.alpha
        ea = math.exp(spec.a_norm)
        sup = float(max(np.max(np.abs(M[fwd]), initial=0.0), np.max(np.abs(N[fwd]), initial=0.0)))
        checks["exp_a_bound"] = {"passed": sup <= ea * (1 + 1e-9), "value": sup, "bound": ea}

        B = np.diag(spec.b)
        comm = float(np.max(np.abs(M @ B - B @ M), initial=0.0))
        checks["commutes_with_B"] = {"passed": comm <= 1e-9, "value": comm}

        inv = float(np.max(np.abs(M @ N - np.eye(n)), initial=0.0))
        checks["inverse"] = {"passed": inv <= TOLERANCES["inverse_check"], "value": inv}

        if spec.distinct_b:
            closed = np.exp(
                np.stack([spec.A[j][j].antiderivative(x) - spec.A[j][j].antiderivative(self.alpha) for j in range(n)], -1)
            )
            diag = np.diagonal(M, axis1=-2, axis2=-1)
            err = float(np.max(np.abs(diag - closed) / np.maximum(1.0, np.abs(closed))))
            checks["diagonal_closed_form"] = {"passed": err <= 1e-8, "value": err}

        failed = [name for name, c in checks.items() if not c["passed"]]
        if failed:
            logger.warning(f"Propagator checks failed at α={self.alpha}: {failed}")
        return checks


def solve_M(
    spec: SystemSpec,
    alpha: float,
    t_cut: Optional[float] = None,
    rtol: float = TOLERANCES["ode_rtol"],
    atol: float = TOLERANCES["ode_atol"],
) -> PropagatorMatrix:
    """
    Solve M′ = DM and (M⁻¹)′ = −M⁻¹D forward on [α, T_cut] and backward on [0, α].

    Raises:
        DomainError: If α < 0
        IntegrationError: If a step fails or M·M⁻¹ deviates from I by more than 1e-8
    """
    if alpha < 0:
        raise DomainError(f"α must be nonnegative, got {alpha}")
    if t_cut is None:
        t_cut = choose_cutoff(spec, alpha)
    D = build_D(spec)
    if D.is_zero:
        logger.debug(f"D ≡ 0: identity propagator at α={alpha}")
        return PropagatorMatrix(spec, alpha, t_cut, identity=True, grid=np.array([0.0, alpha, t_cut]))

    n = spec.n
    nn = n * n

    def rhs(t, y):
        d = D(np.array(t))
        Mt = y[:nn].reshape(n, n)
        Nt = y[nn:].reshape(n, n)
        return np.concatenate([(d @ Mt).ravel(), (-(Nt @ d)).ravel()])

    pieces = []
    grid = [alpha]
    knots = spec.knots
    for stop in (t_cut, 0.0):
        state = np.concatenate([np.eye(n, dtype=complex).ravel()] * 2)
        for a, b in _segments(alpha, stop, knots):
            result = integrate.solve_ivp(rhs, (a, b), state, method="DOP853", rtol=rtol, atol=atol, dense_output=True)
            if not result.success:
                raise IntegrationError(f"M_α solve failed on [{a}, {b}]: {result.message}")
            pieces.append((min(a, b), max(a, b), result.sol))
            grid.extend(result.t.tolist())
            state = result.y[:, -1]
    prop = PropagatorMatrix(spec, alpha, t_cut, identity=False, pieces=pieces, grid=np.unique(grid))
    M, N = prop._evaluate(prop.grid)
    err = float(np.max(np.abs(M @ N - np.eye(n))))
    if err > TOLERANCES["inverse_check"]:
        raise IntegrationError(f"M·M⁻¹ deviates from I by {err:.3e}")
    logger.info(f"Solved M_α at α={alpha} on [0, {t_cut:.4g}] ({len(pieces)} segments)")
    return prop


def propagator_for(
    spec: SystemSpec,
    alpha: float,
    t_cut: Optional[float] = None,
    rtol: float = TOLERANCES["ode_rtol"],
    atol: float = TOLERANCES["ode_atol"],
) -> PropagatorMatrix:
    """:func:`solve_M` memoised on (system, α, T_cut, tolerances)."""
    if t_cut is None:
        t_cut = choose_cutoff(spec, alpha)
    key = cache_key({"system": spec.fingerprint, "alpha": alpha, "t_cut": t_cut, "rtol": rtol, "atol": atol})
    return _PROPAGATORS.get_or_compute(key, lambda: solve_M(spec, alpha, t_cut, rtol, atol))


def clear_propagator_cache() -> None:
    _PROPAGATORS.clear()


def propagator_cache_stats() -> Dict[str, Any]:
    return _PROPAGATORS.get_stats()


def conjugate(propagator: PropagatorMatrix, entries, x: np.ndarray) -> np.ndarray:
    """M⁻¹(x)·E(x)·M(x) for a coefficient matrix E at points ``x``."""
    values = evaluate_matrix(entries, x)
    if propagator.identity:
        return values
    M, N = propagator._evaluate(x)
    return N @ values @ M


@dataclass
class KernelMatrices:
    """Q_α and R_α(·, λ) as pointwise evaluators."""

    spec: SystemSpec
    propagator: PropagatorMatrix
    lam: complex
    off: Any
    laurent: Any

    def _conjugate(self, entries, x: np.ndarray) -> np.ndarray:
        return conjugate(self.propagator, entries, x)

    def q(self, x: np.ndarray) -> np.ndarray:
        """Q_α(x) with exact zeros where b_j = b_l."""
        values = self._conjugate(self.off, x)
        n = self.spec.n
        for j in range(n):
            for l in range(n):
                if self.spec.same_block(j, l):
                    values[..., j, l] = 0.0
        return values

    def r(self, x: np.ndarray) -> np.ndarray:
        """R_α(x, λ)."""
        return self._conjugate(self.laurent, x)

    def v(self, x: np.ndarray) -> np.ndarray:
        """Q_α + R_α."""
        return self.q(x) + self.r(x)

    @property
    def q_is_zero(self) -> bool:
        return all(e.is_zero for row in self.off for e in row)

    @property
    def r_is_zero(self) -> bool:
        return all(e.is_zero for row in self.laurent for e in row)

    def bounds(self, nodes: np.ndarray, weights: np.ndarray) -> Dict[str, Dict[str, Any]]:
        """
        L¹ norms of Q and R on [α, T_cut] by the given quadrature, against
        e^{2a}β²‖A − D‖ and e^{2a}β²γ_α(λ).
        """
        spec = self.spec
        alpha = self.propagator.alpha
        scale = math.exp(2 * spec.a_norm) * spec.block_size ** 2
        out = {}
        for name, values, entries in (("Q", self.q(nodes), self.off), ("R", self.r(nodes), self.laurent)):
            norm = float(np.max(np.einsum("...jl,...->jl", np.abs(values), weights), initial=0.0))
            bound = scale * max_entry_l1(entries, alpha)
            out[name] = {"passed": norm <= bound * (1 + 1e-6) + 1e-12, "value": norm, "bound": bound}
        return out


def build_QR(spec: SystemSpec, M: PropagatorMatrix, lam: complex) -> KernelMatrices:
    """
    Q_α = M⁻¹(A − D)M and R_α = M⁻¹ C(·, λ) M.

    Raises:
        DomainError: If λ = 0
    """
    lam = complex(lam)
    if lam == 0:
        raise DomainError("build_QR needs λ ≠ 0")
    return KernelMatrices(spec, M, lam, off_block(spec), laurent_entries(spec, lam))


@dataclass
class ExtensionResult:
    """Solution samples y(x) for x in ``x`` (increasing); values shape (len(x), n, m)."""

    x: np.ndarray
    values: np.ndarray


def integrate_system(
    spec: SystemSpec,
    lam: complex,
    start: float,
    initial: np.ndarray,
    stop: float,
    t_eval: Optional[np.ndarray] = None,
    rtol: float = TOLERANCES["ode_rtol"],
    atol: float = TOLERANCES["ode_atol"],
) -> ExtensionResult:
    """
    Integrate Y′ = (λρB + A + C(λ))Y from ``start`` to ``stop`` for all columns of ``initial``.

    Raises:
        IntegrationError: If the solver fails on any segment
    """
    initial = np.asarray(initial, dtype=complex)
    if initial.ndim == 1:
        initial = initial[:, None]
    n, m = initial.shape
    lam = complex(lam)

    def rhs(t, y):
        S = system_matrix(spec, np.array(t), lam)
        return (S @ y.reshape(n, m)).ravel()

    if t_eval is None:
        t_eval = np.array([stop])
    t_eval = np.asarray(t_eval, dtype=float)
    lo, hi = min(start, stop), max(start, stop)
    t_eval = t_eval[(t_eval >= lo) & (t_eval <= hi)]
    collected: Dict[float, np.ndarray] = {}
    state = initial.ravel()
    for a, b in _segments(start, stop, spec.knots):
        inside = t_eval[(t_eval >= min(a, b)) & (t_eval <= max(a, b))]
        inside = np.sort(inside)[::-1] if b < a else np.sort(inside)
        result = integrate.solve_ivp(
            rhs, (a, b), state, method="DOP853", rtol=rtol, atol=atol, t_eval=inside if inside.size else None
        )
        if not result.success:
            raise IntegrationError(f"initial-value solve failed on [{a}, {b}]: {result.message}")
        if inside.size:
            for t, col in zip(result.t, result.y.T):
                collected[float(t)] = col.reshape(n, m)
        if result.t.size == 0 or result.t[-1] != b:
            # t_eval may omit the segment end; restart from a dense re-solve
            end = integrate.solve_ivp(rhs, (a, b), state, method="DOP853", rtol=rtol, atol=atol)
            if not end.success:
                raise IntegrationError(f"initial-value solve failed on [{a}, {b}]: {end.message}")
            state = end.y[:, -1]
        else:
            state = result.y[:, -1]
    if start in t_eval:
        collected[float(start)] = initial
    xs = np.array(sorted(collected))
    values = np.stack([collected[x] for x in xs]) if xs.size else np.zeros((0, n, m), dtype=complex)
    return ExtensionResult(xs, values)


def extend_to_zero(
    spec: SystemSpec,
    lam: complex,
    boundary: np.ndarray,
    alpha: float,
    x: Optional[np.ndarray] = None,
    rtol: float = TOLERANCES["ode_rtol"],
    atol: float = TOLERANCES["ode_atol"],
) -> ExtensionResult:
    """
    Solve the full system on [0, α] with y(α) = ``boundary``.

    Args:
        boundary: (n,) or (n, m) values at x = α
        x: Output points in [0, α]; α itself always returns ``boundary`` exactly

    Returns:
        ExtensionResult on the requested points (α = 0 gives the boundary at x = 0)
    """
    boundary = np.asarray(boundary, dtype=complex)
    if boundary.ndim == 1:
        boundary = boundary[:, None]
    if alpha < 0:
        raise DomainError(f"α must be nonnegative, got {alpha}")
    if alpha == 0:
        return ExtensionResult(np.array([0.0]), boundary[None].copy())
    if x is None:
        x = np.linspace(0.0, alpha, 33)
    x = np.unique(np.append(np.asarray(x, dtype=float), alpha))
    result = integrate_system(spec, lam, alpha, boundary, 0.0, t_eval=x, rtol=rtol, atol=atol)
    result.values[result.x == alpha] = boundary
    return result
