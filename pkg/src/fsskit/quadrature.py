"""
Composite Gauss–Legendre panels on [α, T] and stable exponentially weighted sums.

Panels are split at coefficient knots and sized so that the phase advance
|ν|·Δp over one panel stays below a cap; integrals carrying factors
e^{β(p(x) − p(t))} are then accumulated panel by panel with
:func:`discounted_cumsum`, which never forms a factor of modulus > e^{LIMIT}.
"""
import math
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .config import DEFAULT_CONFIG, get_logger
from .errors import NumericalError

logger = get_logger("Quadrature")

GL_ORDER = DEFAULT_CONFIG["kernels"]["gl_order"]
BLOCK_LIMIT = 500.0
MAX_PANELS = 2_000_000


def gauss_legendre(order: int = GL_ORDER) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss–Legendre nodes on (0, 1) and weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def lagrange_matrix(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    Matrix L with L[i, g] = ℓ_g(points[i]) for the Lagrange basis on ``nodes``.
    """
    nodes = np.asarray(nodes, dtype=float)
    points = np.asarray(points, dtype=float)
    L = np.ones(points.shape + nodes.shape)
    for g, xg in enumerate(nodes):
        for h, xh in enumerate(nodes):
            if h != g:
                L[..., g] *= (points - xh) / (xg - xh)
    return L


def differentiation_matrix(nodes: np.ndarray) -> np.ndarray:
    """D[i, g] = ℓ_g′(nodes[i]) on the reference panel."""
    nodes = np.asarray(nodes, dtype=float)
    k = nodes.size
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    c = np.prod(diff, axis=1)
    D = (c[:, None] / c[None, :]) / diff
    np.fill_diagonal(D, 0.0)
    D[np.arange(k), np.arange(k)] = -np.sum(D, axis=1)
    return D


class PanelGrid:
    """
    Panels [τ_m, τ_{m+1}] with ``order`` Gauss–Legendre nodes each.

    ``phase_fn`` maps x to p(x); ``None`` means the identity phase.
    """

    def __init__(self, edges: Sequence[float], phase_fn: Optional[Callable] = None, order: int = GL_ORDER):
        self.edges = np.asarray(edges, dtype=float)
        if self.edges.ndim != 1 or self.edges.size < 2 or not np.all(np.diff(self.edges) > 0):
            raise NumericalError("panel edges must be strictly increasing with at least one panel")
        self.order = order
        self.phase_fn = phase_fn
        self.ref_nodes, self.ref_weights = gauss_legendre(order)
        self.widths = np.diff(self.edges)
        self.nodes = self.edges[:-1, None] + self.widths[:, None] * self.ref_nodes[None, :]
        self.weights = self.widths[:, None] * self.ref_weights[None, :]
        self.edge_phase = self.phase(self.edges)
        self.node_phase = self.phase(self.nodes)
        self.dphase = np.diff(self.edge_phase)

    def phase(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x if self.phase_fn is None else np.asarray(self.phase_fn(x), dtype=float)

    @property
    def num_panels(self) -> int:
        return self.widths.size

    @property
    def start(self) -> float:
        return float(self.edges[0])

    @property
    def end(self) -> float:
        return float(self.edges[-1])

    @cached_property
    def sub_forward(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Quadrature data for ∫_{τ_m}^{x_h}: sub-node phases (P, g, g), sub-weights
        (P, g, g) and the reference interpolation tensor (g, g, g).
        """
        xi, eta = self.ref_nodes, self.ref_weights
        ref = xi[:, None] * xi[None, :]  # [h, r]
        L = lagrange_matrix(xi, ref)  # [h, r, g]
        pts = self.edges[:-1, None, None] + self.widths[:, None, None] * ref[None]
        w = self.widths[:, None, None] * (xi[:, None] * eta[None, :])[None]
        return self.phase(pts), w, L

    @cached_property
    def sub_backward(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Same as :attr:`sub_forward` for ∫_{x_h}^{τ_{m+1}}."""
        xi, eta = self.ref_nodes, self.ref_weights
        ref = xi[:, None] + (1.0 - xi[:, None]) * xi[None, :]
        L = lagrange_matrix(xi, ref)
        pts = self.edges[:-1, None, None] + self.widths[:, None, None] * ref[None]
        w = self.widths[:, None, None] * ((1.0 - xi[:, None]) * eta[None, :])[None]
        return self.phase(pts), w, L

    def locate(self, x: np.ndarray) -> np.ndarray:
        """Panel index for each x (points at τ_P map to the last panel)."""
        idx = np.searchsorted(self.edges, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.num_panels - 1)

    def interpolate(self, node_values: np.ndarray, x: np.ndarray) -> np.ndarray:
        """
        Evaluate panel-wise Lagrange interpolants of ``node_values`` (..., P, g) at ``x``.
        """
        x = np.asarray(x, dtype=float)
        idx = self.locate(x)
        local = (x - self.edges[idx]) / self.widths[idx]
        L = lagrange_matrix(self.ref_nodes, local)  # (len(x), g)
        picked = node_values[..., idx, :]  # (..., len(x), g)
        return np.einsum("...ig,ig->...i", picked, L)

    def derivative(self, node_values: np.ndarray) -> np.ndarray:
        """Panel-wise derivative of the interpolant at the nodes."""
        D = differentiation_matrix(self.ref_nodes)
        return np.einsum("hg,...pg->...ph", D, node_values) / self.widths[:, None]

    def refine(self, factor: int) -> "PanelGrid":
        """Split every panel into ``factor`` equal parts."""
        if factor <= 1:
            return self
        t = np.linspace(0.0, 1.0, factor + 1)[:-1]
        inner = (self.edges[:-1, None] + self.widths[:, None] * t[None, :]).ravel()
        return PanelGrid(np.append(inner, self.edges[-1]), self.phase_fn, self.order)

    def points(self) -> np.ndarray:
        """All edges and nodes in increasing order."""
        return self.merge(self.edges, self.nodes)

    def merge(self, edge_values: np.ndarray, node_values: np.ndarray) -> np.ndarray:
        """Interleave (..., P+1) edge values and (..., P, g) node values like :meth:`points`."""
        body = np.concatenate([edge_values[..., :-1, None], node_values], axis=-1)
        flat = body.reshape(body.shape[:-2] + (-1,))
        return np.concatenate([flat, edge_values[..., -1:]], axis=-1)

    def edge_index(self, x: float) -> int:
        """Index of the edge equal to ``x`` (within rounding)."""
        i = int(np.argmin(np.abs(self.edges - x)))
        if abs(self.edges[i] - x) > 1e-12 * max(1.0, abs(x)):
            raise NumericalError(f"{x} is not a panel edge")
        return i


def build_panels(
    start: float,
    end: float,
    knots: Sequence[float] = (),
    frequency: float = 0.0,
    phase_fn: Optional[Callable] = None,
    h_max: float = DEFAULT_CONFIG["kernels"]["h_max"],
    phase_cap: float = DEFAULT_CONFIG["kernels"]["phase_cap"],
    order: int = GL_ORDER,
) -> PanelGrid:
    """
    Panels on [start, end] that contain every knot as an edge, have width ≤ h_max,
    and satisfy frequency·Δp ≤ phase_cap.

    Raises:
        NumericalError: If the requested resolution needs more than MAX_PANELS panels
    """
    if not end > start:
        raise NumericalError(f"empty panel range [{start}, {end}]")
    fixed = np.unique(np.concatenate([[start, end], [k for k in knots if start < k < end]]))
    keep = np.concatenate([[True], np.diff(fixed) > 1e-13 * np.maximum(1.0, np.abs(fixed[1:]))])
    fixed = fixed[keep]
    phase = (lambda x: np.asarray(x, dtype=float)) if phase_fn is None else phase_fn
    fixed_phase = np.asarray(phase(fixed), dtype=float)
    pieces = []
    for i in range(fixed.size - 1):
        length = fixed[i + 1] - fixed[i]
        dp = fixed_phase[i + 1] - fixed_phase[i]
        count = max(1, math.ceil(length / h_max), math.ceil(frequency * dp / phase_cap) if frequency > 0 else 1)
        if count > MAX_PANELS:
            raise NumericalError(f"panel count {count} exceeds {MAX_PANELS}; reduce |λ| or the range")
        pieces.append(np.linspace(fixed[i], fixed[i + 1], count + 1)[:-1])
    edges = np.append(np.concatenate(pieces), fixed[-1])
    if phase_fn is not None and frequency > 0:
        # nonuniform ρ: split panels whose phase advance still exceeds the cap
        for _ in range(20):
            advance = frequency * np.diff(np.asarray(phase(edges), dtype=float))
            bad = advance > phase_cap * (1 + 1e-12)
            if not np.any(bad):
                break
            splits = np.ceil(advance[bad] / phase_cap).astype(int)
            lows, highs = edges[:-1][bad], edges[1:][bad]
            extra = [np.linspace(lo, hi, s + 1)[1:-1] for lo, hi, s in zip(lows, highs, splits)]
            edges = np.unique(np.concatenate([edges] + extra))
            if edges.size > MAX_PANELS:
                raise NumericalError(f"panel count exceeds {MAX_PANELS}")
    logger.debug(f"Built {edges.size - 1} panels on [{start:.4g}, {end:.4g}] (frequency {frequency:.4g})")
    return PanelGrid(edges, phase_fn, order)


def _discounted_1d(w: np.ndarray, d: np.ndarray, limit: float) -> np.ndarray:
    size = w.size
    out = np.empty(size, dtype=complex)
    if size == 0:
        return out
    C = np.cumsum(d)
    creal = C.real
    start = 0
    while start < size:
        drop = creal[start] - creal[start:]
        # Re C is nonincreasing up to rounding; enforce it for the search
        drop = np.maximum.accumulate(drop)
        end = start + int(np.searchsorted(drop, limit, side="right"))
        end = max(end, start + 1)
        rel = C[start:end] - C[start]
        acc = np.cumsum(w[start:end] * np.exp(-rel))
        block = np.exp(rel) * acc
        if start > 0:
            block = block + out[start - 1] * np.exp(C[start:end] - C[start - 1])
        out[start:end] = block
        start = end
    return out


def discounted_cumsum(w: np.ndarray, d: np.ndarray, reverse: bool = False, limit: float = BLOCK_LIMIT) -> np.ndarray:
    """
    y_m = Σ_{i≤m} w_i exp(Σ_{i<r≤m} d_r) along the last axis, for Re d ≤ 0.

    With ``reverse=True`` the sum runs from the right:
    y_m = Σ_{i≥m} w_i exp(Σ_{m≤r<i} d_r).

    The accumulation is blocked so that no intermediate factor exceeds e^{limit}.
    """
    w = np.asarray(w, dtype=complex)
    d = np.broadcast_to(np.asarray(d, dtype=complex), w.shape)
    if np.any(d.real > 1e-9 * (1.0 + np.abs(d))):
        raise NumericalError("discounted_cumsum needs Re d ≤ 0")
    if reverse:
        # y_m = w_m + e^{d_m} y_{m+1}: flip and shift the discounts by one
        wf = w[..., ::-1]
        df = np.concatenate([np.zeros(d.shape[:-1] + (1,), dtype=complex), d[..., ::-1][..., 1:]], axis=-1)
        return discounted_cumsum(wf, df, reverse=False, limit=limit)[..., ::-1]
    out = np.empty(w.shape, dtype=complex)
    for index in np.ndindex(w.shape[:-1]):
        out[index] = _discounted_1d(w[index], d[index], limit)
    return out
