"""
The system y′ = (λρ(x)B + A(x) + C(x, λ))y on [0, ∞).

B = diag(b_1, ..., b_n) is constant, A has summable entries and C is given in
Laurent form C(x, λ) = Σ_{k=1}^{N} C_k(x) λ^{−k}.
"""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .cache import cache_key
from .coeffs import ZERO, CoefficientFunction, WeightFunction
from .config import get_logger
from .errors import DomainError, SpecError

logger = get_logger("System")

Matrix = Tuple[Tuple[CoefficientFunction, ...], ...]


def _as_matrix(entries: Sequence[Sequence[CoefficientFunction]], n: int, label: str) -> Matrix:
    if len(entries) != n or any(len(row) != n for row in entries):
        raise SpecError(f"{label} must be a {n}×{n} matrix")
    for row in entries:
        for entry in row:
            if not isinstance(entry, CoefficientFunction):
                raise SpecError(f"{label} entries must be coefficient functions")
    return tuple(tuple(row) for row in entries)


def evaluate_matrix(entries: Matrix, x: np.ndarray) -> np.ndarray:
    """Evaluate a coefficient matrix at points ``x``; result has shape x.shape + (n, n)."""
    x = np.asarray(x, dtype=float)
    n = len(entries)
    out = np.zeros(x.shape + (n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            if not entries[j][k].is_zero:
                out[..., j, k] = entries[j][k](x)
    return out


def max_entry_l1(entries: Matrix, alpha: float) -> float:
    """max_{jk} ‖e_jk‖_{L[α,∞)}."""
    return max((e.l1_tail(alpha)[0] for row in entries for e in row if not e.is_zero), default=0.0)


@dataclass(frozen=True)
class SystemSpec:
    """
    Data of the system y′ = (λρB + A + C)y.

    Attributes:
        n: Dimension (≥ 2)
        b: Diagonal of B
        A: n×n matrix of summable coefficients
        C: Laurent matrices C_1..C_N (empty tuple means C ≡ 0)
        rho: Positive weight ρ
        name: Label used in reports
    """

    n: int
    b: Tuple[complex, ...]
    A: Matrix
    C: Tuple[Matrix, ...] = ()
    rho: WeightFunction = field(default_factory=WeightFunction)
    name: str = "system"

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 2:
            raise SpecError(f"n must be an integer ≥ 2, got {self.n!r}")
        b = tuple(complex(v) for v in self.b)
        if len(b) != self.n:
            raise SpecError(f"b must have {self.n} entries, got {len(b)}")
        if not all(np.isfinite(v) for v in b):
            raise SpecError("b entries must be finite")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", _as_matrix(self.A, self.n, "A"))
        object.__setattr__(
            self, "C", tuple(_as_matrix(c, self.n, f"C_{i + 1}") for i, c in enumerate(self.C))
        )

    @property
    def laurent_order(self) -> int:
        return len(self.C)

    @property
    def c_is_zero(self) -> bool:
        return all(e.is_zero for c in self.C for row in c for e in row)

    @property
    def roots_of_unity(self) -> bool:
        """True iff {b_j} is exactly the set of n-th roots of unity."""
        roots = np.exp(2j * np.pi * np.arange(self.n) / self.n)
        b = np.asarray(self.b)
        return all(np.min(np.abs(b - r)) < 1e-12 for r in roots) and all(
            np.min(np.abs(roots - v)) < 1e-12 for v in b
        )

    @property
    def a_norm(self) -> float:
        """a = n·max_{jk}‖a_jk‖_{L[0,∞)}."""
        return self.n * max_entry_l1(self.A, 0.0)

    @property
    def block_size(self) -> int:
        """Largest number of equal b_j."""
        return max(sum(1 for v in self.b if v == u) for u in self.b)

    @property
    def distinct_b(self) -> bool:
        return len(set(self.b)) == self.n

    @property
    def knots(self) -> Tuple[float, ...]:
        points = set(self.rho.knots)
        for matrix in (self.A,) + self.C:
            for row in matrix:
                for e in row:
                    points.update(e.knots)
        return tuple(sorted(p for p in points if p >= 0))

    @property
    def support_end(self) -> float:
        """Right end of the joint support of A − D and C."""
        ends = [e.support_end for row in off_block(self) for e in row]
        ends += [e.support_end for c in self.C for row in c for e in row]
        return max(ends, default=0.0)

    def same_block(self, j: int, k: int) -> bool:
        return self.b[j] == self.b[k]

    def permuted(self, perm: Sequence[int]) -> "SystemSpec":
        """Renumber so that new index i refers to old index perm[i]."""
        perm = list(perm)
        if sorted(perm) != list(range(self.n)):
            raise SpecError(f"Invalid permutation {perm}")
        return SystemSpec(
            n=self.n,
            b=tuple(self.b[p] for p in perm),
            A=tuple(tuple(self.A[p][q] for q in perm) for p in perm),
            C=tuple(tuple(tuple(c[p][q] for q in perm) for p in perm) for c in self.C),
            rho=self.rho,
            name=self.name,
        )

    def descriptor(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "n": self.n,
            "b": [[v.real, v.imag] for v in self.b],
            "A": [[e.descriptor() for e in row] for row in self.A],
            "C": [[[e.descriptor() for e in row] for row in c] for c in self.C],
            "rho": self.rho.descriptor(),
        }

    @property
    def fingerprint(self) -> str:
        return cache_key(self.descriptor())


@dataclass(frozen=True)
class DiagonalBlockMatrix:
    """D with d_jk = a_jk when b_j = b_k and zero otherwise."""

    entries: Matrix

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return evaluate_matrix(self.entries, x)

    @property
    def is_zero(self) -> bool:
        return all(e.is_zero for row in self.entries for e in row)


def build_D(spec: SystemSpec) -> DiagonalBlockMatrix:
    """Keep the entries of A inside the blocks of equal b_j."""
    n = spec.n
    return DiagonalBlockMatrix(
        tuple(tuple(spec.A[j][k] if spec.same_block(j, k) else ZERO for k in range(n)) for j in range(n))
    )


def off_block(spec: SystemSpec) -> Matrix:
    """A − D: the entries of A outside the equal-b blocks."""
    n = spec.n
    return tuple(tuple(ZERO if spec.same_block(j, k) else spec.A[j][k] for k in range(n)) for j in range(n))


def laurent_entries(spec: SystemSpec, lam: complex) -> Matrix:
    """Entries of C(·, λ) = Σ_k C_k λ^{−k} as coefficient functions."""
    n = spec.n
    rows = []
    for j in range(n):
        row = []
        for k in range(n):
            entry: CoefficientFunction = ZERO
            for order, c in enumerate(spec.C, start=1):
                if not c[j][k].is_zero:
                    entry = entry + c[j][k] * (lam ** (-order))
            row.append(entry)
        rows.append(tuple(row))
    return tuple(rows)


class LaurentBounds(NamedTuple):
    gamma: float
    K: float
    phi: float


def _check_lambda(lam: complex) -> complex:
    lam = complex(lam)
    if lam == 0 or not np.isfinite(lam):
        raise DomainError("λ must be finite and nonzero")
    return lam


def laurent_constant(spec: SystemSpec, alpha: float) -> float:
    """K_α = Σ_k ‖C_k‖_{L[α,∞)} with the max-entry matrix norm."""
    return float(sum(max_entry_l1(c, alpha) for c in spec.C))


def laurent_threshold(spec: SystemSpec, alpha: float) -> float:
    """φ(α) = max{1/α, K_α^{1/(2N)}}, 1/0 = ∞."""
    inv = math.inf if alpha == 0 else 1.0 / alpha
    if spec.laurent_order == 0:
        return inv
    return max(inv, laurent_constant(spec, alpha) ** (1.0 / (2 * spec.laurent_order)))


def gamma_K_phi(spec: SystemSpec, alpha: float, lam: complex) -> LaurentBounds:
    """
    Return γ_α(λ), K_α and φ(α).

    Raises:
        DomainError: If λ = 0 or α < 0
    """
    lam = _check_lambda(lam)
    if alpha < 0:
        raise DomainError(f"α must be nonnegative, got {alpha}")
    gamma = max_entry_l1(laurent_entries(spec, lam), alpha)
    return LaurentBounds(gamma, laurent_constant(spec, alpha), laurent_threshold(spec, alpha))


def kernel_mass(spec: SystemSpec, alpha: float, lam: complex) -> float:
    """γ_α(λ) + max_{jl}‖(A − D)_{jl}‖_{L[α,∞)}: the L¹ mass of the operator kernel."""
    lam = _check_lambda(lam)
    return max_entry_l1(laurent_entries(spec, lam), alpha) + max_entry_l1(off_block(spec), alpha)


def system_matrix(spec: SystemSpec, x: np.ndarray, lam: complex) -> np.ndarray:
    """λρ(x)B + A(x) + C(x, λ) at points ``x``."""
    x = np.asarray(x, dtype=float)
    out = evaluate_matrix(spec.A, x)
    if spec.C and lam != 0:
        out += evaluate_matrix(laurent_entries(spec, lam), x)
    rho = spec.rho(x)
    for j, bj in enumerate(spec.b):
        out[..., j, j] += lam * bj * rho
    return out


def phi_certificate(
    spec: SystemSpec,
    alphas: Sequence[float],
    radii_factors: Sequence[float] = (1.0, 2.0, 4.0, 8.0, 32.0),
    angles: int = 16,
) -> List[Dict[str, Any]]:
    """
    Check sup_{|λ|≥φ(α)} γ_α(λ) ≤ √K_α on sampled circles for every α.

    Returns:
        One record per α with the sampled supremum and a ``passed`` flag
    """
    records = []
    thetas = 2 * np.pi * np.arange(angles) / angles
    for alpha in alphas:
        K = laurent_constant(spec, alpha)
        phi = laurent_threshold(spec, alpha)
        sup_gamma = 0.0
        if math.isfinite(phi) and spec.C:
            for factor in radii_factors:
                for t in thetas:
                    lam = phi * factor * np.exp(1j * t)
                    sup_gamma = max(sup_gamma, max_entry_l1(laurent_entries(spec, lam), alpha))
        bound = math.sqrt(K)
        records.append(
            {
                "alpha": float(alpha),
                "K": K,
                "phi": phi,
                "sup_gamma": sup_gamma,
                "sqrt_K": bound,
                "passed": sup_gamma <= bound * (1 + 1e-9) + 1e-15,
            }
        )
        logger.debug(f"φ certificate at α={alpha}: sup γ={sup_gamma:.3e}, √K={bound:.3e}")
    return records


def diagonal_system(
    b: Sequence[complex],
    A: Optional[Sequence[Sequence[CoefficientFunction]]] = None,
    C: Sequence[Sequence[Sequence[CoefficientFunction]]] = (),
    rho: Optional[WeightFunction] = None,
    name: str = "system",
) -> SystemSpec:
    """Convenience constructor; A defaults to the zero matrix."""
    n = len(b)
    if A is None:
        A = [[ZERO] * n for _ in range(n)]
    return SystemSpec(n=n, b=tuple(b), A=A, C=tuple(C), rho=rho or WeightFunction(1.0), name=name)

