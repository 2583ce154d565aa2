"""
Second-order pencil with a distribution potential.

    −u″ + σ′u + z p₀ u = z²u,  x ≥ 0,

is solved through its regularised first-order form in (u, u^{[1]} = u′ − σu).
With λ = zi, v = (u, u^{[1]}/λ) and y = Θ⁻¹v, Θ = [[1, 1], [1, −1]], it becomes
y′ = (λ diag(1, −1) + A + C₁/λ)y; z in the closed lower half-plane maps onto
the closed right half-plane Γ_1. Points with Im z > 0 are solved at −z with
p₀ replaced by −p₀, which is the same equation.
"""
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .coeffs import ZERO, CoefficientFunction, tail_norms
from .config import get_logger
from .errors import DomainError, SpecError
from .kernels import KernelSettings
from .picard import PicardSettings
from .solutions import SolutionSystem, build_fss
from .system import SystemSpec

logger = get_logger("Sturm")

THETA = np.array([[1.0, 1.0], [1.0, -1.0]])
PENCIL_B = (1.0 + 0j, -1.0 + 0j)


@dataclass(frozen=True)
class PencilSpec:
    """σ (primitive of the potential) and p₀, both in L¹ ∩ L²[0, ∞)."""

    sigma: CoefficientFunction = ZERO
    p0: CoefficientFunction = ZERO
    name: str = "pencil"

    def __post_init__(self):
        for label, f in (("sigma", self.sigma), ("p0", self.p0)):
            if f.is_zero:
                continue
            norms = tail_norms(f, 0.0)
            if not (math.isfinite(norms.l1) and math.isfinite(norms.l2)):
                raise SpecError(f"{label} must lie in L¹ ∩ L²[0, ∞)")

    def reflected(self) -> "PencilSpec":
        """The same equation written for −z."""
        return PencilSpec(self.sigma, -self.p0, self.name)

    def descriptor(self) -> Dict[str, Any]:
        return {"name": self.name, "sigma": self.sigma.descriptor(), "p0": self.p0.descriptor()}


def reduce_pencil(pencil: PencilSpec) -> SystemSpec:
    """
    The equivalent 2×2 system: b = (1, −1), ρ ≡ 1,
    A = [[−ip₀/2, σ − ip₀/2], [σ + ip₀/2, ip₀/2]], C₁ = (σ²/2)[[−1, −1], [1, 1]].
    """
    sigma, p0 = pencil.sigma, pencil.p0
    half = p0 * 0.5j
    A = ((-half, sigma - half), (sigma + half, half))
    C: Tuple = ()
    if not sigma.is_zero:
        s2 = (sigma * sigma) * 0.5
        C = (((-s2, -s2), (s2, s2)),)
    return SystemSpec(n=2, b=PENCIL_B, A=A, C=C, name=pencil.name)


def pencil_lambda(z: complex) -> Tuple[complex, bool]:
    """λ = iz̃ with z̃ = z, or z̃ = −z when Im z > 0; returns (λ, reflected)."""
    z = complex(z)
    if z == 0:
        raise DomainError("z must be nonzero")
    reflected = z.imag > 0
    return 1j * (-z if reflected else z), reflected


@dataclass
class PencilSolution:
    """
    u_1, u_2 and their quasi-derivatives at one z.

    ``system`` is the FSS of the reduced system at λ = iz̃; all normalised
    quantities are taken relative to e^{b_kλ(x − α)}.
    """

    pencil: PencilSpec
    solved: PencilSpec
    alpha: float
    z: complex
    lam: complex
    reflected: bool
    system: SolutionSystem

    @property
    def t_cut(self) -> float:
        return self.system.t_cut

    def _columns(self):
        return sorted(self.system.columns, key=lambda c: c.original_index)

    def values(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(u, u^{[1]}) at x ∈ [0, T_cut], each of shape (len(x), 2) with columns k = 1, 2."""
        Y = self.system.matrix(x)
        V = np.einsum("ij,xjk->xik", THETA, Y)
        return V[:, 0, :], self.lam * V[:, 1, :]

    def phase(self, x: np.ndarray) -> np.ndarray:
        """exp((−1)^k i∫_α^x p̃₀/2) for k = 1, 2, shape (len(x), 2)."""
        p0 = self.solved.p0
        P = 0.5 * (p0.antiderivative(x) - p0.antiderivative(self.alpha))
        return np.stack([np.exp(-1j * P), np.exp(1j * P)], axis=-1)

    def normalised(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        (û, û^{[1]}) = (u, u^{[1]})e^{−b_kλ(x − α)} for x ≥ α, shape (len(x), 2) each.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        u = np.zeros((x.size, 2), dtype=complex)
        q = np.zeros((x.size, 2), dtype=complex)
        for k, col in enumerate(self._columns()):
            yhat = col.normalised(x)
            u[:, k] = yhat[:, 0] + yhat[:, 1]
            q[:, k] = self.lam * (yhat[:, 0] - yhat[:, 1])
        return u, q

    def residuals(self, x: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        s̃_jk(x, z) of the plane-wave representation on x ≥ α.

        Returns:
            (x, s̃ of shape (len(x), 2, 2) with j = 1 for u and j = 2 for u^{[1]},
            sup_x |s̃_jk|)
        """
        if x is None:
            x = self.system.columns[0].z.grid.points()
        x = np.asarray(x, dtype=float)
        x = x[(x >= self.alpha) & (x <= self.t_cut)]
        u, q = self.normalised(x)
        phase = self.phase(x)
        b = np.asarray(PENCIL_B)
        s = np.stack([u - phase, q / (b * self.lam) - phase], axis=1)
        return x, s, np.max(np.abs(s), axis=0)

    def wronskian_at_alpha(self) -> complex:
        """det [[u_1, u_2], [u_1^{[1]}, u_2^{[1]}]] at x = α."""
        u, q = self.normalised(np.array([self.alpha]))
        return complex(u[0, 0] * q[0, 1] - u[0, 1] * q[0, 0])

    def node_samples(self):
        """The kernel grid, its nodes, and (û, û^{[1]}) there, shape (P, g, 2) each."""
        grid = self.system.columns[0].z.grid
        x = grid.nodes
        u, q = self.normalised(x.ravel())
        shape = x.shape + (2,)
        return grid, x, u.reshape(shape), q.reshape(shape)

    def to_rows(self, x: Optional[np.ndarray] = None) -> List[Dict[str, float]]:
        """CSV rows of u_k, u_k^{[1]} and, for x ≥ α, the residuals s̃_jk."""
        x = self.system.sample_points() if x is None else np.asarray(x, dtype=float)
        u, q = self.values(x)
        right = x >= self.alpha
        s = np.full((x.size, 2, 2), np.nan + 0j)
        if np.any(right):
            s[right] = self.residuals(x[right])[1]
        rows = []
        for i, xi in enumerate(x):
            row: Dict[str, float] = {"x": float(xi)}
            for k in range(2):
                row[f"u{k + 1}_re"] = float(u[i, k].real)
                row[f"u{k + 1}_im"] = float(u[i, k].imag)
                row[f"u{k + 1}q_re"] = float(q[i, k].real)
                row[f"u{k + 1}q_im"] = float(q[i, k].imag)
            for j in range(2):
                for k in range(2):
                    row[f"s{j + 1}{k + 1}_re"] = float(s[i, j, k].real)
                    row[f"s{j + 1}{k + 1}_im"] = float(s[i, j, k].imag)
            rows.append(row)
        return rows

    def to_dict(self) -> Dict[str, Any]:
        sup = self.residuals()[2]
        return {
            "z_re": self.z.real,
            "z_im": self.z.imag,
            "alpha": self.alpha,
            "reflected": self.reflected,
            "residual_sup": [[float(v) for v in row] for row in sup],
            "wronskian_abs": abs(self.wronskian_at_alpha()),
            "quasi_derivative_defect": quasi_derivative_defect(self),
            "regularized_residual": regularized_residual(self),
            "system": self.system.to_dict(),
        }


def pencil_fss(
    pencil: PencilSpec,
    alpha: float,
    z: complex,
    kernel_settings: Optional[KernelSettings] = None,
    picard_settings: Optional[PicardSettings] = None,
) -> PencilSolution:
    """
    FSS {u_1, u_2} of the pencil at z.

    Raises:
        DomainError: If z = 0
        ThresholdError: If |z| is below the contraction threshold
    """
    lam, reflected = pencil_lambda(z)
    solved = pencil.reflected() if reflected else pencil
    spec = reduce_pencil(solved)
    system = build_fss(spec, alpha, 1, lam, kernel_settings, picard_settings)
    logger.info(f"Pencil FSS at z={complex(z):.6g} (λ={lam:.6g}{', reflected' if reflected else ''})")
    return PencilSolution(pencil, solved, float(alpha), complex(z), lam, reflected, system)


def quasi_derivative_defect(solution: PencilSolution) -> float:
    """
    sup |u′ − σu − u^{[1]}|/max(1, |z|) in the normalised variables, with u′
    from panel-wise differentiation of the node interpolant (one-sided at knots).
    """
    grid, x, u, q = solution.node_samples()
    b = np.asarray(PENCIL_B)
    du = grid.derivative(np.moveaxis(u, -1, 0))
    du = np.moveaxis(du, 0, -1) + b * solution.lam * u
    sigma = solution.solved.sigma(x)[..., None]
    defect = du - sigma * u - q
    return float(np.max(np.abs(defect)) / max(1.0, abs(solution.z)))


def regularized_residual(solution: PencilSolution) -> float:
    """
    sup |−(u^{[1]})′ − σu^{[1]} − σ²u + zp₀u − z²u| / max(1, |z|²) in the
    normalised variables, over both columns.
    """
    grid, x, u, q = solution.node_samples()
    b = np.asarray(PENCIL_B)
    dq = np.moveaxis(grid.derivative(np.moveaxis(q, -1, 0)), 0, -1) + b * solution.lam * q
    sigma = solution.pencil.sigma(x)[..., None]
    p0 = solution.pencil.p0(x)[..., None]
    z = solution.z
    residual = -dq - sigma * q - sigma**2 * u + z * p0 * u - z * z * u
    return float(np.max(np.abs(residual)) / max(1.0, abs(z) ** 2))


__all__ = [
    "PencilSolution",
    "PencilSpec",
    "pencil_fss",
    "pencil_lambda",
    "quasi_derivative_defect",
    "reduce_pencil",
    "regularized_residual",
]
