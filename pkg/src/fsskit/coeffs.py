"""
Scalar coefficient functions on the half-line [0, ∞).

Three closed families are supported: finite sums of decaying exponentials,
compactly supported piecewise polynomials, and tabulated data with linear
interpolation (zero beyond the last knot). Sums and products of mixed kinds
fall back to a generic combination evaluated by adaptive quadrature.

The monotone phase p(x) = ∫₀ˣ ρ lives on :class:`WeightFunction`.
"""
import cmath
import math
from abc import ABC, abstractmethod
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial import polynomial as npoly
from scipy import integrate, optimize

from .config import DEFAULT_CONFIG, get_logger
from .errors import DomainError, MalformedCoefficientError, OutOfRangeError, SpecError

logger = get_logger("Coeffs")

QUAD_ABS = DEFAULT_CONFIG["tolerances"]["quad_abs"]

ArrayLike = Union[float, Sequence[float], np.ndarray]
Scalar = Union[int, float, complex]


class TailNorms(NamedTuple):
    """L¹ and L² norms of a coefficient on [α, ∞) with a quadrature error bound."""

    l1: float
    l2: float
    error: float


def parse_complex(value: Any) -> complex:
    """Parse a number, an ``[re, im]`` pair or a string such as ``"1-2j"``."""
    try:
        if isinstance(value, (list, tuple)):
            if len(value) != 2:
                raise ValueError("expected [re, im]")
            result = complex(float(value[0]), float(value[1]))
        elif isinstance(value, str):
            result = complex(value.replace(" ", "").replace("i", "j"))
        else:
            result = complex(value)
    except (TypeError, ValueError) as e:
        raise SpecError(f"Cannot parse complex number from {value!r}: {e}") from None
    if not cmath.isfinite(result):
        raise MalformedCoefficientError(f"Non-finite number {value!r}")
    return result


def _quad_real(fn, a: float, b: float, tol: float) -> Tuple[float, float]:
    value, error = integrate.quad(fn, a, b, epsabs=tol, epsrel=1e-10, limit=200)
    return float(value), float(error)


def _integrate_pieces(fn, alpha: float, knots: Sequence[float], end: float, tol: float) -> Tuple[float, float]:
    """Integrate a real function over [alpha, end], splitting at knots."""
    if end <= alpha:
        return 0.0, 0.0
    inner = [k for k in knots if alpha < k < end]
    edges = [alpha] + sorted(inner)
    total, error = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = _quad_real(fn, lo, hi, tol)
        total += v
        error += e
    v, e = _quad_real(fn, edges[-1], end, tol)
    return total + v, error + e


class CoefficientFunction(ABC):
    """
    Immutable complex-valued function on [0, ∞) with finite L¹ norm.

    Subclasses implement evaluation, antiderivatives and tail norms; the
    arithmetic operators return new instances.
    """

    kind = "abstract"

    def __call__(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        values = np.asarray(self._evaluate(x), dtype=complex)
        if not np.all(np.isfinite(values)):
            raise MalformedCoefficientError(f"{self.kind} coefficient produced non-finite values")
        return values

    @abstractmethod
    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        ...

    @property
    @abstractmethod
    def knots(self) -> Tuple[float, ...]:
        """Points where the function or its derivatives may jump."""

    @property
    @abstractmethod
    def support_end(self) -> float:
        """Right end of the support (``inf`` for unbounded support, 0 for zero)."""

    @property
    @abstractmethod
    def is_zero(self) -> bool:
        ...

    @property
    @abstractmethod
    def is_real(self) -> bool:
        ...

    @abstractmethod
    def antiderivative(self, x: ArrayLike) -> np.ndarray:
        """Return ∫₀ˣ f(t) dt."""

    @abstractmethod
    def total_integral(self) -> complex:
        """Return ∫₀^∞ f(t) dt."""

    @abstractmethod
    def l1_tail(self, alpha: float, tol: float = QUAD_ABS) -> Tuple[float, float]:
        """Return (‖f‖_{L[α,∞)}, error bound)."""

    @abstractmethod
    def l2_tail(self, alpha: float, tol: float = QUAD_ABS) -> Tuple[float, float]:
        """Return (‖f‖_{L₂[α,∞)}, error bound)."""

    @abstractmethod
    def scaled(self, factor: complex) -> "CoefficientFunction":
        ...

    @abstractmethod
    def descriptor(self) -> Dict[str, Any]:
        """JSON-compatible description that round-trips through :func:`coefficient_from_descriptor`."""

    def l1_between(self, a: float, b: float, tol: float = QUAD_ABS) -> float:
        """‖f‖_{L[a,b]} by adaptive quadrature."""
        if self.is_zero or b <= a:
            return 0.0
        value, _ = _integrate_pieces(lambda t: abs(complex(self(t))), a, self.knots, min(b, self.support_end), tol)
        return value

    # Algebra

    def __add__(self, other: "CoefficientFunction") -> "CoefficientFunction":
        if not isinstance(other, CoefficientFunction):
            return NotImplemented
        if other.is_zero:
            return self
        if self.is_zero:
            return other
        return Combination("sum", (self, other))

    def __mul__(self, other: Union[Scalar, "CoefficientFunction"]) -> "CoefficientFunction":
        if isinstance(other, (int, float, complex, np.number)):
            factor = complex(other)
            return ZERO if factor == 0 or self.is_zero else self.scaled(factor)
        if not isinstance(other, CoefficientFunction):
            return NotImplemented
        if self.is_zero or other.is_zero:
            return ZERO
        return Combination("product", (self, other))

    def __rmul__(self, other: Scalar) -> "CoefficientFunction":
        return self.__mul__(other)

    def __neg__(self) -> "CoefficientFunction":
        return self * -1

    def __sub__(self, other: "CoefficientFunction") -> "CoefficientFunction":
        return self + (-other)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.descriptor()})"


class ExpDecay(CoefficientFunction):
    """Finite sum Σ c_i e^{−β_i x} with complex c_i and β_i > 0."""

    kind = "expdecay"

    def __init__(self, terms: Sequence[Tuple[Scalar, float]] = ()):
        merged: Dict[float, complex] = {}
        for c, beta in terms:
            c = complex(c)
            beta = float(beta)
            if not (beta > 0 and math.isfinite(beta)):
                raise SpecError(f"Exponential rate must be positive and finite, got {beta}")
            if not cmath.isfinite(c):
                raise MalformedCoefficientError(f"Non-finite amplitude {c}")
            merged[beta] = merged.get(beta, 0j) + c
        self.terms: Tuple[Tuple[complex, float], ...] = tuple(
            (c, beta) for beta, c in sorted(merged.items()) if c != 0
        )

    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape, dtype=complex)
        for c, beta in self.terms:
            out += c * np.exp(-beta * x)
        return out

    @property
    def knots(self) -> Tuple[float, ...]:
        return ()

    @property
    def support_end(self) -> float:
        return 0.0 if self.is_zero else math.inf

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_real(self) -> bool:
        return all(c.imag == 0 for c, _ in self.terms)

    def antiderivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        for c, beta in self.terms:
            out += c * (-np.expm1(-beta * x)) / beta
        return out

    def total_integral(self) -> complex:
        return sum((c / beta for c, beta in self.terms), 0j)

    def _single_phase(self) -> bool:
        phases = {round(cmath.phase(c), 14) for c, _ in self.terms}
        return len(phases) <= 1

    def l1_tail(self, alpha: float, tol: float = QUAD_ABS) -> Tuple[float, float]:
        if self.is_zero:
            return 0.0, 0.0
        if self._single_phase():
            return float(sum(abs(c) * math.exp(-beta * alpha) / beta for c, beta in self.terms)), 0.0
        return _quad_real(lambda t: abs(complex(self(t))), alpha, math.inf, tol)

    def l2_tail(self, alpha: float, tol: float = QUAD_ABS) -> Tuple[float, float]:
        total = 0j
        for ci, bi in self.terms:
            for cj, bj in self.terms:
                total += ci * cj.conjugate() * math.exp(-(bi + bj) * alpha) / (bi + bj)
        return math.sqrt(max(total.real, 0.0)), 0.0

    def scaled(self, factor: complex) -> CoefficientFunction:
        return ExpDecay([(c * factor, beta) for c, beta in self.terms])

    def __add__(self, other):
        if isinstance(other, ExpDecay):
            return ExpDecay(self.terms + other.terms)
        return super().__add__(other)

    def __mul__(self, other):
        if isinstance(other, ExpDecay):
            return ExpDecay([(ci * cj, bi + bj) for ci, bi in self.terms for cj, bj in other.terms])
        return super().__mul__(other)

    def descriptor(self) -> Dict[str, Any]:
        if self.is_zero:
            return {"kind": "zero"}
        return {
            "kind": self.kind,
            "terms": [{"c": [c.real, c.imag], "beta": beta} for c, beta in self.terms],
        }


ZERO = ExpDecay(())


def _shift(coef: np.ndarray, shift: float) -> np.ndarray:
    """Coefficients of P(u + shift) in ascending powers of u."""
    if shift == 0:
        return coef
    return Polynomial(coef)(Polynomial([shift, 1.0])).coef.astype(complex)


class PiecewisePolynomial(CoefficientFunction):
    """
    Compactly supported piecewise polynomial.

    Piece ``i`` lives on [knots[i], knots[i+1]) and is given in the local
    variable t = x − knots[i] by ascending-power coefficients. The function is
    zero outside [knots[0], knots[-1]).
    """

    kind = "piecewise"

    def __init__(self, knots: Sequence[float], coefficients: Sequence[Sequence[Scalar]]):
        knots_arr = np.asarray(knots, dtype=float)
        if knots_arr.ndim != 1 or knots_arr.size < 2:
            raise SpecError("Piecewise polynomial needs at least two knots")
        if not np.all(np.isfinite(knots_arr)) or knots_arr[0] < 0:
            raise SpecError("Knots must be finite and nonnegative")
        if not np.all(np.diff(knots_arr) > 0):
            raise SpecError("Knots must be strictly increasing")
        if len(coefficients) != knots_arr.size - 1:
            raise SpecError(f"Expected {knots_arr.size - 1} coefficient lists, got {len(coefficients)}")
        coefs = []
        for c in coefficients:
            arr = np.atleast_1d(np.asarray([complex(v) for v in c] or [0j], dtype=complex))
            if not np.all(np.isfinite(arr)):
                raise MalformedCoefficientError("Non-finite polynomial coefficient")
            coefs.append(npoly.polytrim(arr) if np.any(arr) else np.zeros(1, dtype=complex))
        self._knots = knots_arr
        self._coefs: List[np.ndarray] = coefs
        widths = np.diff(knots_arr)
        self._piece_integrals = np.array(
            [npoly.polyval(w, npoly.polyint(c)) for w, c in zip(widths, coefs)], dtype=complex
        )
        self._cumulative = np.concatenate([[0j], np.cumsum(self._piece_integrals)])

    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(x.shape, dtype=complex)
        idx = np.searchsorted(self._knots, x, side="right") - 1
        for i, c in enumerate(self._coefs):
            sel = idx == i
            if np.any(sel):
                out[sel] = npoly.polyval(x[sel] - self._knots[i], c)
        return out

    @property
    def knots(self) -> Tuple[float, ...]:
        return tuple(float(k) for k in self._knots)

    @property
    def support_end(self) -> float:
        return 0.0 if self.is_zero else float(self._knots[-1])

    @property
    def is_zero(self) -> bool:
        return all(not np.any(c) for c in self._coefs)

    @property
    def is_real(self) -> bool:
        return all(np.all(c.imag == 0) for c in self._coefs)

    @property
    def pieces(self) -> List[Tuple[float, float, np.ndarray]]:
        return [(float(self._knots[i]), float(self._knots[i + 1]), c) for i, c in enumerate(self._coefs)]

    def antiderivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        out[x >= self._knots[-1]] = self._cumulative[-1]
        idx = np.searchsorted(self._knots, x, side="right") - 1
        for i, c in enumerate(self._coefs):
            sel = idx == i
            if np.any(sel):
                out[sel] = self._cumulative[i] + npoly.polyval(x[sel] - self._knots[i], npoly.polyint(c))
        return out

    def total_integral(self) -> complex:
        return complex(self._cumulative[-1])

    def l1_tail(self, alpha: float, tol: float = QUAD_ABS) -> Tuple[float, float]:
        total, error = 0.0, 0.0
        for lo, hi, c in self.pieces:
            if hi <= alpha or not np.any(c):
                continue
            start = max(lo, alpha)
            if c.size == 1:
                total += abs(c[0]) * (hi - start)
                continue
            v, e = _quad_real(lambda t, c=c, lo=lo: abs(npoly.polyval(t - lo, c)), start, hi, tol)
            total += v
            error += e
        return total, error

    def l2_tail(self, alpha: float, tol: float = QUAD_ABS) -> Tuple[float, float]:
        total = 0.0
        for lo, hi, c in self.pieces:
            if hi <= alpha:
                continue
            sq = npoly.polyint(npoly.polymul(c, np.conj(c)))
            t0 = max(lo, alpha) - lo
            total += (npoly.polyval(hi - lo, sq) - npoly.polyval(t0, sq)).real
        return math.sqrt(max(total, 0.0)), 0.0

    def scaled(self, factor: complex) -> CoefficientFunction:
        return PiecewisePolynomial(self._knots, [c * factor for c in self._coefs])

    def _on_breaks(self, breaks: np.ndarray) -> List[np.ndarray]:
        """Re-expand onto the pieces [breaks[i], breaks[i+1])."""
        result = []
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            mid = 0.5 * (lo + hi)
            i = int(np.searchsorted(self._knots, mid, side="right")) - 1
            if 0 <= i < len(self._coefs):
                result.append(_shift(self._coefs[i], lo - self._knots[i]))
            else:
                result.append(np.zeros(1, dtype=complex))
        return result

    def _combine(self, other: "PiecewisePolynomial", op) -> "PiecewisePolynomial":
        breaks = np.union1d(self._knots, other._knots)
        mine, theirs = self._on_breaks(breaks), other._on_breaks(breaks)
        return PiecewisePolynomial(breaks, [op(a, b) for a, b in zip(mine, theirs)])

    def __add__(self, other):
        if isinstance(other, PiecewisePolynomial) and not other.is_zero and not self.is_zero:
            return self._combine(other, npoly.polyadd)
        return super().__add__(other)

    def __mul__(self, other):
        if isinstance(other, PiecewisePolynomial):
            return self._combine(other, npoly.polymul)
        return super().__mul__(other)

    def descriptor(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "knots": [float(k) for k in self._knots],
            "coefficients": [[[v.real, v.imag] for v in c] for c in self._coefs],
        }


class Tabulated(PiecewisePolynomial):
    """Linear interpolation of tabulated values, zero beyond the last knot."""

    kind = "tabulated"

    def __init__(self, x: Sequence[float], values: Sequence[Scalar]):
        x_arr = np.asarray(x, dtype=float)
        v_arr = np.asarray([complex(v) for v in values], dtype=complex)
        if x_arr.shape != v_arr.shape:
            raise SpecError("Tabulated x and values must have equal length")
        if not np.all(np.isfinite(v_arr)):
            raise MalformedCoefficientError("Tabulated values must be finite")
        if x_arr.size < 2:
            raise SpecError("Tabulated coefficient needs at least two points")
        if not np.all(np.diff(x_arr) > 0):
            raise SpecError("Tabulated knots must be strictly increasing")
        slopes = np.diff(v_arr) / np.diff(x_arr)
        super().__init__(x_arr, [[v, s] for v, s in zip(v_arr[:-1], slopes)])
        self._values = v_arr

    def scaled(self, factor: complex) -> CoefficientFunction:
        return Tabulated(self._knots, self._values * factor)

    def descriptor(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "x": [float(k) for k in self._knots],
            "values": [[v.real, v.imag] for v in self._values],
        }


class Combination(CoefficientFunction):
    """Sum or product of mixed-kind coefficients, integrated numerically."""

    kind = "combination"

    def __init__(self, op: str, parts: Sequence[CoefficientFunction]):
        if op not in ("sum", "product"):
            raise SpecError(f"Unknown combination {op!r}")
        self.op = op
        self.parts = tuple(parts)

    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        values = [p(x) for p in self.parts]
        if self.op == "sum":
            return np.sum(values, axis=0)
        return np.prod(values, axis=0)

    @property
    def knots(self) -> Tuple[float, ...]:
        return tuple(sorted({k for p in self.parts for k in p.knots}))

    @property
    def support_end(self) -> float:
        ends = [p.support_end for p in self.parts]
        return max(ends) if self.op == "sum" else min(ends)

    @property
    def is_zero(self) -> bool:
        flags = [p.is_zero for p in self.parts]
        return all(flags) if self.op == "sum" else any(flags)

    @property
    def is_real(self) -> bool:
        return all(p.is_real for p in self.parts)

    def _complex_quad(self, a: float, b: float) -> complex:
        re, _ = _integrate_pieces(lambda t: complex(self(t)).real, a, self.knots, b, QUAD_ABS)
        im, _ = _integrate_pieces(lambda t: complex(self(t)).imag, a, self.knots, b, QUAD_ABS)
        return complex(re, im)

    def antiderivative(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        flat = x.ravel()
        order = np.argsort(flat)
        out = np.zeros(flat.shape, dtype=complex)
        acc, prev = 0j, 0.0
        for i in order:
            upper = min(flat[i], self.support_end)
            if upper > prev:
                acc += self._complex_quad(prev, upper)
                prev = upper
            out[i] = acc
        return out.reshape(x.shape)

    def total_integral(self) -> complex:
        return self._complex_quad(0.0, self.support_end)

    def l1_tail(self, alpha: float, tol: float = QUAD_ABS) -> Tuple[float, float]:
        return _integrate_pieces(lambda t: abs(complex(self(t))), alpha, self.knots, self.support_end, tol)

    def l2_tail(self, alpha: float, tol: float = QUAD_ABS) -> Tuple[float, float]:
        sq, err = _integrate_pieces(lambda t: abs(complex(self(t))) ** 2, alpha, self.knots, self.support_end, tol * tol)
        value = math.sqrt(max(sq, 0.0))
        return value, (math.sqrt(err) if err > 0 else 0.0)

    def scaled(self, factor: complex) -> CoefficientFunction:
        if self.op == "product":
            return Combination("product", (self.parts[0].scaled(factor),) + self.parts[1:])
        return Combination("sum", tuple(p.scaled(factor) for p in self.parts))

    def descriptor(self) -> Dict[str, Any]:
        return {"kind": self.op, "parts": [p.descriptor() for p in self.parts]}


def tail_norms(f: CoefficientFunction, alpha: float, tol: float = QUAD_ABS) -> TailNorms:
    """
    Return ‖f‖_{L[α,∞)} and ‖f‖_{L₂[α,∞)}.

    Closed forms are used where the kind allows; otherwise adaptive quadrature
    with the summed error estimate reported in ``error``.

    Raises:
        DomainError: If α < 0
        MalformedCoefficientError: On non-finite evaluation
    """
    if alpha < 0 or not math.isfinite(alpha):
        raise DomainError(f"α must be finite and nonnegative, got {alpha}")
    l1, e1 = f.l1_tail(alpha, tol)
    l2, e2 = f.l2_tail(alpha, tol)
    return TailNorms(l1, l2, e1 + e2)


class WeightFunction:
    """
    Positive weight ρ(x) = base + g(x) with a real perturbation g.

    ``base > 0`` gives an unbounded phase; ``base == 0`` gives a weight of
    finite total mass whose phase inverse is limited to [0, mass).
    """

    def __init__(self, base: float = 1.0, perturbation: Optional[CoefficientFunction] = None):
        self.base = float(base)
        self.perturbation = perturbation if perturbation is not None else ZERO
        if not math.isfinite(self.base) or self.base < 0:
            raise SpecError(f"Weight base must be finite and nonnegative, got {base}")
        if not self.perturbation.is_real:
            raise SpecError("Weight perturbation must be real-valued")
        if self.base == 0 and (self.perturbation.is_zero or math.isfinite(self.perturbation.support_end)):
            raise SpecError("Weight must be positive almost everywhere")
        self._check_positive()

    def _check_positive(self) -> None:
        if self.is_constant:
            if self.base <= 0:
                raise SpecError("Weight must be positive")
            return
        samples = self._sample_grid(0.0, math.inf)
        if np.any(self(samples) <= 0):
            raise SpecError("Weight must be positive at all evaluation points")

    def _sample_grid(self, a: float, b: float) -> np.ndarray:
        end = self.perturbation.support_end
        stop = min(b, end if math.isfinite(end) else a + 50.0)
        stop = max(stop, a)
        inner = [k for k in self.perturbation.knots if a <= k <= stop]
        # right-limits just inside each piece
        nudged = [k + 1e-12 * (1 + k) for k in inner if k + 1e-12 * (1 + k) < stop]
        return np.unique(np.concatenate([np.linspace(a, stop, 2001), inner, nudged]))

    def __call__(self, x: ArrayLike) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.base + self.perturbation(x).real

    @property
    def is_constant(self) -> bool:
        return self.perturbation.is_zero

    @property
    def knots(self) -> Tuple[float, ...]:
        return self.perturbation.knots

    @property
    def total_mass(self) -> float:
        if self.base > 0:
            return math.inf
        return float(self.perturbation.total_integral().real)

    def essinf(self, alpha: float = 0.0, end: float = math.inf) -> float:
        """Infimum of ρ on [α, end] (sampled at a dense grid and every knot)."""
        if self.is_constant:
            return self.base
        value = float(np.min(self(self._sample_grid(alpha, end))))
        if end > self.perturbation.support_end or not math.isfinite(end):
            value = min(value, self.base) if self.base > 0 else 0.0
        return value

    def phase(self, x: ArrayLike) -> np.ndarray:
        """p(x) = ∫₀ˣ ρ(t) dt."""
        x = np.asarray(x, dtype=float)
        if np.any(x < 0):
            raise DomainError("phase is defined for x ≥ 0")
        if self.is_constant:
            return self.base * x
        return self.base * x + self.perturbation.antiderivative(x).real

    def _invert_one(self, y: float) -> float:
        if y == 0:
            return 0.0
        hi = max(1.0, y / self.base) if self.base > 0 else 1.0
        while float(self.phase(hi)) < y:
            hi *= 2.0
            if hi > 1e12:
                raise OutOfRangeError(f"phase_inverse({y}) exceeds the reachable range")
        x = optimize.brentq(lambda t: float(self.phase(t)) - y, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)
        rho = float(self(x))
        if rho > 0:
            x = max(0.0, x - (float(self.phase(x)) - y) / rho)
        return x

    def phase_inverse(self, y: ArrayLike) -> np.ndarray:
        """
        Invert p by bracketing bisection followed by one Newton step.

        Raises:
            DomainError: If y < 0
            OutOfRangeError: If y ≥ total mass of a finite-mass weight
        """
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise DomainError("phase_inverse expects y ≥ 0")
        if self.base == 0 and np.any(y >= self.total_mass):
            raise OutOfRangeError(f"phase_inverse argument exceeds total mass {self.total_mass:.6g}")
        if self.is_constant:
            return y / self.base
        flat = np.array([self._invert_one(float(v)) for v in y.ravel()])
        return flat.reshape(y.shape)

    def descriptor(self) -> Dict[str, Any]:
        return {"base": self.base, "perturbation": self.perturbation.descriptor()}


def phase(rho: WeightFunction, x: ArrayLike) -> np.ndarray:
    """p(x) = ∫₀ˣ ρ."""
    return rho.phase(x)


def phase_inverse(rho: WeightFunction, y: ArrayLike) -> np.ndarray:
    """p⁻¹(y)."""
    return rho.phase_inverse(y)


def coefficient_from_descriptor(
    desc: Any, table: Optional[Dict[str, CoefficientFunction]] = None
) -> CoefficientFunction:
    """
    Build a coefficient from a scenario descriptor.

    Accepted forms: ``0``, a name in ``table``, or a mapping with ``kind`` in
    {zero, expdecay, piecewise, tabulated, scaled, sum, product}.

    Raises:
        SpecError: On unknown names, kinds or malformed parameters
    """
    table = table or {}
    if isinstance(desc, (int, float)) and not isinstance(desc, bool) and desc == 0:
        return ZERO
    if isinstance(desc, str):
        if desc not in table:
            raise SpecError(f"Unknown coefficient reference {desc!r}")
        return table[desc]
    if not isinstance(desc, dict) or "kind" not in desc:
        raise SpecError(f"Malformed coefficient descriptor: {desc!r}")
    kind = desc["kind"]
    try:
        if kind == "zero":
            return ZERO
        if kind == "expdecay":
            terms = []
            for term in desc["terms"]:
                if isinstance(term, dict):
                    terms.append((parse_complex(term["c"]), float(term["beta"])))
                else:
                    terms.append((parse_complex(term[0]), float(term[1])))
            return ExpDecay(terms)
        if kind == "piecewise":
            return PiecewisePolynomial(
                desc["knots"], [[parse_complex(v) for v in c] for c in desc["coefficients"]]
            )
        if kind == "tabulated":
            return Tabulated(desc["x"], [parse_complex(v) for v in desc["values"]])
        if kind == "scaled":
            return coefficient_from_descriptor(desc["of"], table) * parse_complex(desc["factor"])
        if kind in ("sum", "product"):
            parts = [coefficient_from_descriptor(p, table) for p in desc["parts"]]
            if not parts:
                raise SpecError(f"{kind} needs at least one part")
            result = parts[0]
            for p in parts[1:]:
                result = result + p if kind == "sum" else result * p
            return result
    except (KeyError, IndexError, TypeError) as e:
        raise SpecError(f"Malformed {kind} descriptor: {e}") from None
    raise SpecError(f"Unknown coefficient kind {kind!r}")


def weight_from_descriptor(
    desc: Any, table: Optional[Dict[str, CoefficientFunction]] = None
) -> WeightFunction:
    """Build ρ from a number (constant weight) or ``{"base", "perturbation"}``."""
    if desc is None:
        return WeightFunction(1.0)
    if isinstance(desc, (int, float)) and not isinstance(desc, bool):
        return WeightFunction(float(desc))
    if isinstance(desc, dict):
        pert = desc.get("perturbation")
        return WeightFunction(
            float(desc.get("base", 1.0)),
            coefficient_from_descriptor(pert, table) if pert is not None else None,
        )
    raise SpecError(f"Malformed weight descriptor: {desc!r}")
