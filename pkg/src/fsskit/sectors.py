"""
Geometry of the λ-plane.

The lines Re(λb_j) = Re(λb_l) split ℂ into sectors on which the ordering of
Re(λb_j) is fixed. Sectors are numbered counterclockwise starting with the
one that contains arg λ = 0⁺. For b the n-th roots of unity, large sectors
Ω_m join two neighbouring sectors around the first one.

Indices in this module are 0-based; serialised records are 1-based.
"""
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import get_logger
from .errors import DomainError, SectorError

logger = get_logger("Sectors")

TWO_PI = 2.0 * math.pi
ANGLE_TOL = 1e-12


@dataclass(frozen=True)
class Sector:
    """
    Open angular region (lo, hi) with the permutation ordering Re(λb_j).

    ``permutation[i]`` is the original index of the i-th largest Re(λb).
    ``lo_frac``/``hi_frac`` hold exact multiples of π when known.
    """

    kappa: int
    lo: float
    hi: float
    permutation: Tuple[int, ...]
    lo_frac: Optional[Fraction] = None
    hi_frac: Optional[Fraction] = None
    label: str = ""

    @property
    def opening(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, lam: complex, closed: bool = True, tol: float = ANGLE_TOL) -> bool:
        if lam == 0:
            return False
        if self.opening >= TWO_PI - tol:
            return True
        d = (math.atan2(lam.imag, lam.real) - self.lo) % TWO_PI
        if closed:
            return d <= self.opening + tol or d >= TWO_PI - tol
        return tol < d < self.opening - tol

    def to_record(self) -> Dict[str, Any]:
        return {
            "kappa": self.kappa,
            "beta_lo": self.lo,
            "beta_hi": self.hi,
            "permutation": [p + 1 for p in self.permutation],
        }


@dataclass(frozen=True)
class SectorGeometry:
    """All sectors Γ_κ for a given b."""

    b: Tuple[complex, ...]
    sectors: Tuple[Sector, ...]
    roots_of_unity: bool

    @property
    def n(self) -> int:
        return len(self.b)

    def sector(self, kappa: int) -> Sector:
        """Sector with 1-based number ``kappa``."""
        for s in self.sectors:
            if s.kappa == kappa:
                return s
        raise SectorError(f"No sector number {kappa} (have {len(self.sectors)})")

    def find(self, lam: complex) -> Sector:
        """Lowest-numbered sector whose closure contains λ."""
        if lam == 0:
            raise DomainError("λ = 0 lies in every sector closure")
        for s in self.sectors:
            if s.contains(lam):
                return s
        raise SectorError(f"λ={lam} is in no sector")

    def to_records(self) -> List[Dict[str, Any]]:
        return [s.to_record() for s in self.sectors]


def _is_roots_of_unity(b: Sequence[complex]) -> bool:
    n = len(b)
    roots = np.exp(2j * np.pi * np.arange(n) / n)
    arr = np.asarray(b, dtype=complex)
    return all(np.min(np.abs(arr - r)) < 1e-12 for r in roots) and len(set(np.round(arr, 12))) == n


def _snap(angle: float, denominator: int) -> Tuple[float, Optional[Fraction]]:
    units = angle * denominator / math.pi
    nearest = round(units)
    if abs(units - nearest) < 1e-9:
        frac = Fraction(nearest, denominator)
        return float(frac) * math.pi, frac
    return angle, None


def permutation_at(b: Sequence[complex], theta: float) -> Tuple[int, ...]:
    """Stable nonincreasing order of Re(e^{iθ}b_j)."""
    values = np.real(np.exp(1j * theta) * np.asarray(b, dtype=complex))
    return tuple(int(i) for i in np.argsort(-values, kind="stable"))


def _boundary_angles(b: Sequence[complex]) -> List[float]:
    angles = []
    for j in range(len(b)):
        for l in range(j + 1, len(b)):
            d = complex(b[j]) - complex(b[l])
            if d == 0:
                continue
            base = (math.pi / 2 - math.atan2(d.imag, d.real)) % math.pi
            angles.extend([base, base + math.pi])
    return angles


def compute_sectors(b: Sequence[complex], quarter_planes: bool = False) -> SectorGeometry:
    """
    Split the λ-plane by the lines Re(λb_j) = Re(λb_l).

    Args:
        b: Diagonal of B (n ≥ 2)
        quarter_planes: For n = 2, use the four quarter planes

    Returns:
        SectorGeometry with sectors numbered counterclockwise from arg 0⁺
    """
    b = tuple(complex(v) for v in b)
    n = len(b)
    if n < 2:
        raise DomainError("compute_sectors needs n ≥ 2")
    roots = _is_roots_of_unity(b)
    if quarter_planes:
        if n != 2:
            raise SectorError("quarter-plane sectors are defined for n = 2 only")
        raw = [0.0, math.pi / 2, math.pi, 3 * math.pi / 2]
    else:
        raw = _boundary_angles(b)
    if not raw:
        full = Sector(1, 0.0, TWO_PI, tuple(range(n)), Fraction(0), Fraction(2), label="full plane")
        return SectorGeometry(b, (full,), roots)

    snapped: Dict[float, Optional[Fraction]] = {}
    for angle in raw:
        angle = angle % TWO_PI
        frac = None
        if roots:
            angle, frac = _snap(angle, 2 * n)
            if frac is not None and frac >= 2:
                frac -= 2
                angle = float(frac) * math.pi
        if angle >= TWO_PI - ANGLE_TOL:
            angle, frac = 0.0, (Fraction(0) if frac is not None else None)
        if not any(abs(angle - a) < 1e-12 for a in snapped):
            snapped[angle] = frac
    bounds = sorted(snapped)

    intervals: List[Tuple[float, float, Optional[Fraction], Optional[Fraction]]] = []
    if bounds[0] > ANGLE_TOL:
        last = bounds[-1]
        lo_frac = snapped[last] - 2 if snapped[last] is not None else None
        intervals.append((last - TWO_PI, bounds[0], lo_frac, snapped[bounds[0]]))
        pairs = list(zip(bounds[:-1], bounds[1:]))
    else:
        pairs = list(zip(bounds, bounds[1:] + [TWO_PI]))
    for lo, hi in pairs:
        hi_frac = snapped.get(hi, Fraction(2) if roots and hi == TWO_PI else None)
        intervals.append((lo, hi, snapped[lo], hi_frac))

    sectors = tuple(
        Sector(kappa, lo, hi, permutation_at(b, 0.5 * (lo + hi)), lf, hf, label=f"Γ_{kappa}")
        for kappa, (lo, hi, lf, hf) in enumerate(intervals, start=1)
    )
    logger.debug(f"Computed {len(sectors)} sectors for n={n}")
    return SectorGeometry(b, sectors, roots)


def canonical_roots(n: int) -> Tuple[complex, ...]:
    """
    n-th roots of unity numbered so that Re(λb_1) ≥ ... ≥ Re(λb_n) on Γ_1.

    b_{2s+1} = e^{2πis/n} and b_{2s} = e^{−2πis/n} (1-based positions).
    """
    b = []
    for pos in range(1, n + 1):
        s = pos // 2
        sign = 1 if pos % 2 == 1 else -1
        angle = sign * 2 * math.pi * s / n
        if pos == n and n % 2 == 0:
            b.append(complex(-1.0, 0.0))
        else:
            b.append(complex(math.cos(angle), math.sin(angle)))
    return tuple(b)


@dataclass(frozen=True)
class LargeSector:
    """
    Ω_m with its two halves Γ_1 and Γ_σ and the middle sector Λ.

    All intervals are (lo, hi) angles in radians; ``*_frac`` are multiples of π.
    Indices ``m`` and ``sigma`` are 1-based as in the usual numbering.
    """

    n: int
    m: int
    sigma: int
    omega: complex
    region: Sector
    lam: Sector
    gamma1: Sector
    gamma_sigma: Sector
    omega_gamma1: complex
    omega_sigma: complex

    def side_of(self, lam: complex) -> str:
        """Sub-region used to solve at λ: ``lambda``, ``gamma1`` or ``gamma_sigma``."""
        if self.lam.contains(lam):
            return "lambda"
        if self.gamma1.contains(lam):
            return "gamma1"
        if self.gamma_sigma.contains(lam):
            return "gamma_sigma"
        raise SectorError(f"λ={lam} is outside Ω_{self.m}")

    def omega_for(self, side: str) -> complex:
        return {"lambda": self.omega, "gamma1": self.omega_gamma1, "gamma_sigma": self.omega_sigma}[side]

    def region_for(self, side: str) -> Sector:
        return {"lambda": self.lam, "gamma1": self.gamma1, "gamma_sigma": self.gamma_sigma}[side]

    def to_record(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "sigma": self.sigma,
            "omega_lo": self.region.lo,
            "omega_hi": self.region.hi,
            "omega": [self.omega.real, self.omega.imag],
            "lambda_lo": self.lam.lo,
            "lambda_hi": self.lam.hi,
        }


def _interval(lo: Fraction, hi: Fraction, label: str, n: int, kappa: int = 0) -> Sector:
    return Sector(kappa, float(lo) * math.pi, float(hi) * math.pi, tuple(range(n)), lo, hi, label=label)


def large_sector(b: Sequence[complex], m: int, quarter_planes: bool = False) -> LargeSector:
    """
    Ω_m, σ, ω and Λ for b in the numbering of :func:`canonical_roots`.

    Args:
        b: Diagonal of B, must equal ``canonical_roots(n)``
        m: 1-based index, 2 ≤ m ≤ n
        quarter_planes: Required for n = 2

    Raises:
        SectorError: If b is not in canonical numbering, m is out of range,
            or n = 2 without ``quarter_planes``
    """
    b = tuple(complex(v) for v in b)
    n = len(b)
    if n == 2 and not quarter_planes:
        raise SectorError("n = 2 large sectors need the quarter-plane convention")
    if not np.allclose(b, canonical_roots(n), atol=1e-12, rtol=0):
        raise SectorError("large sectors need b = n-th roots of unity in canonical numbering")
    if not 2 <= m <= n:
        raise SectorError(f"m must be in [2, {n}], got {m}")
    sign = (-1) ** (m - 1)
    lo = Fraction(sign - 1, 2 * n)
    hi = Fraction(sign + 3, 2 * n)
    centre = Fraction(sign + 1, 2 * n)
    half = Fraction(1, 2 * n)
    sigma = 2 * n if m % 2 == 0 else 2
    omega = b[m - 1] * complex(math.cos((-1) ** m * math.pi / n), math.sin((-1) ** m * math.pi / n))
    gamma1 = _interval(Fraction(0), Fraction(1, n), "Γ_1", n, 1)
    if m % 2 == 0:
        gamma_sigma = _interval(Fraction(-1, n), Fraction(0), f"Γ_{sigma}", n, sigma)
    else:
        gamma_sigma = _interval(Fraction(1, n), Fraction(2, n), f"Γ_{sigma}", n, sigma)
    return LargeSector(
        n=n,
        m=m,
        sigma=sigma,
        omega=omega,
        region=_interval(lo, hi, f"Ω_{m}", n),
        lam=_interval(centre - half, centre + half, "Λ", n),
        gamma1=gamma1,
        gamma_sigma=gamma_sigma,
        omega_gamma1=b[m - 1],
        omega_sigma=b[m] if m < n else b[n - 1],
    )


class OrderingCheck(NamedTuple):
    ok: bool
    margin: float


def ordering_margin(b: Sequence[complex], perm: Sequence[int], omega: complex, lam: complex, k: int) -> float:
    """min over j < k of Re λ(b_πj − ω) and over l ≥ k of Re λ(ω − b_πl)."""
    values = np.real(lam * np.asarray([b[p] for p in perm], dtype=complex))
    ref = (lam * omega).real
    upper = values[:k] - ref
    lower = ref - values[k:]
    return float(np.min(np.concatenate([upper, lower]))) if len(b) else 0.0


def check_ordering(
    geometry: SectorGeometry,
    region: Sector,
    omega: Optional[complex],
    lam: complex,
    k: int,
    slack: float = ANGLE_TOL,
) -> OrderingCheck:
    """
    Check Re(λb_j) ≥ Re(λω) ≥ Re(λb_l) for j < k ≤ l in the region's numbering.

    Args:
        geometry: Sector data for b
        region: Sector, Λ or half of a large sector
        omega: Reference point; ``None`` means b_{π(k)}
        lam: Spectral parameter in the closure of ``region``
        k: 0-based pivot index

    Returns:
        (ok, margin) with ok when margin ≥ −slack·max(1, |λ|)

    Raises:
        SectorError: If λ is outside the closure of ``region``
    """
    lam = complex(lam)
    if not region.contains(lam):
        raise SectorError(f"λ={lam} is outside the closure of {region.label or region.kappa}")
    if not 0 <= k < geometry.n:
        raise DomainError(f"pivot k={k} out of range")
    if omega is None:
        omega = geometry.b[region.permutation[k]]
    margin = ordering_margin(geometry.b, region.permutation, omega, lam, k)
    return OrderingCheck(margin >= -slack * max(1.0, abs(lam)), margin)


def sample_closure(region: Sector, count: int, radius: float = 1.0) -> np.ndarray:
    """``count`` points of modulus ``radius`` evenly covering the closed arc of ``region``."""
    thetas = np.linspace(region.lo, region.hi, count)
    return radius * np.exp(1j * thetas)
