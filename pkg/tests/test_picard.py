"""Tests for the Picard operator, contraction bounds and threshold searches."""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fsskit.coeffs import ZERO, ExpDecay
from fsskit.errors import CertificateError, DivergenceError, ThresholdError
from fsskit.kernels import KernelContext, KernelSettings
from fsskit.picard import (
    BoundedContinuousVector,
    ContractionBound,
    PicardSettings,
    contraction_bound,
    default_rays,
    exponential_source,
    fss_threshold,
    ray_threshold,
    solve_fixed_point,
    two_step_ratio,
)
from fsskit.system import diagonal_system

SMALL = KernelSettings(grid_size=24, refine_cells=2)
FAST_SEARCH = PicardSettings(search_ceiling=10.0, search_samples=6)


def upper(c):
    return diagonal_system((1, -1), A=[[ZERO, ExpDecay([(c, 1.0)])], [ZERO, ZERO]])


def coupled(c):
    e = ExpDecay([(c, 1.0)])
    return diagonal_system((1, -1), A=[[ZERO, e], [e, ZERO]])


def source(ctx, lam, k):
    return exponential_source(ctx, ctx.grid_data(lam).grid, 0.0, k)


class TestHelpers:
    def test_two_step_ratio(self):
        assert two_step_ratio([1.0, 0.5, 0.25, 0.125]) == pytest.approx(0.25)
        assert two_step_ratio([1e-14, 1.0, 1.0]) == 0.0
        assert two_step_ratio([0.3]) == 0.0

    def test_default_rays(self):
        rays = default_rays(4)
        assert rays[0] == pytest.approx(complex(math.cos(math.pi / 4), math.sin(math.pi / 4)))
        assert all(abs(abs(u) - 1) < 1e-15 for u in rays)

    def test_vector_arithmetic(self):
        ctx = KernelContext(upper(0.01), 0.0, 0, settings=SMALL)
        grid = ctx.grid_data(3.0).grid
        e0 = BoundedContinuousVector.unit(grid, 2, 0)
        z = e0 * 2.0 - e0
        assert z.sup_norm() == 1.0
        assert_allclose(z.interpolate(np.array([0.0, 3.3])), [[1.0, 1.0], [0.0, 0.0]])
        assert_allclose(BoundedContinuousVector.zeros(grid, 2).component_sup(), [0.0, 0.0])


class TestContractionBound:
    """bound_V and bound_V2."""

    def test_trivial_system(self):
        ctx = KernelContext(diagonal_system((1, -1)), 0.0, 0, settings=SMALL)
        bound = contraction_bound(ctx, 5.0)
        assert bound.bound_V == 0.0 and bound.bound_V2 == 0.0
        assert bound.series_constant == 1.0

    def test_formula(self):
        ctx = KernelContext(coupled(0.3), 0.0, 0, settings=SMALL)
        bound = contraction_bound(ctx, 2.0)
        e2a = math.exp(2 * 0.6)
        assert bound.a == pytest.approx(0.6)
        assert bound.kernel_mass == pytest.approx(0.3)
        assert bound.theta == pytest.approx(0.3 / 5, rel=1e-4)
        assert bound.bound_V2 == pytest.approx(4 * e2a * 0.3 * bound.theta)
        assert bound.bound_V == pytest.approx(2 * e2a * 0.6)

    def test_series_constant_infinite(self):
        ctx = KernelContext(coupled(0.3), 0.0, 0, settings=SMALL)
        assert contraction_bound(ctx, 0.05).series_constant == math.inf


class TestSolveFixedPoint:
    """z = w + 𝒱_k(λ)z."""

    def test_trivial_solution_is_source(self):
        ctx = KernelContext(diagonal_system((1, -1)), 0.0, 0, settings=SMALL)
        w = source(ctx, 4.0, 0)
        z, cert = solve_fixed_point(ctx, w, 4.0)
        assert_allclose(z.edge_values, w.edge_values)
        assert cert.iterations == 1
        assert cert.correction == 0.0

    def test_upper_coupling_closed_form(self):
        c, lam = 0.01, 3.0
        ctx = KernelContext(upper(c), 0.0, 1, settings=SMALL)
        z, cert = solve_fixed_point(ctx, source(ctx, lam, 1), lam)
        edges = z.grid.edges
        assert_allclose(z.edge_values[0], -c * np.exp(-edges) / (1 + 2 * lam), atol=5e-10)
        assert_allclose(z.edge_values[1], 1.0)
        assert cert.iterations == 2
        assert cert.integral_residual < 1e-9
        assert cert.norm_z <= cert.series_constant * cert.norm_w
        assert cert.correction <= cert.correction_bound * (1 + 1e-9)
        record = cert.to_dict()
        assert record["k"] == 2 and record["lambda_re"] == lam

    def test_correction_above_series_bound_fails(self, monkeypatch):
        # w0 = (1 + c/7)e^{-x}, w1 = 1 gives z0 = e^{-x}: ‖z‖/‖w‖ < 0.999 while ‖z − w‖ = ‖𝒱w‖
        c, lam = 0.01, 3.0
        ctx = KernelContext(upper(c), 0.0, 1, settings=SMALL)
        bound = contraction_bound(ctx, lam)
        scale = 1.0 + c / (1 + 2 * lam)

        def fn(x):
            x = np.asarray(x, dtype=float)
            return np.array([scale * np.exp(-x), np.ones_like(x)], dtype=complex)

        w = BoundedContinuousVector.from_function(ctx.grid_data(lam).grid, fn)
        z, cert = solve_fixed_point(ctx, w, lam, bound=bound)
        assert cert.correction == pytest.approx(c / (1 + 2 * lam), rel=1e-5)

        monkeypatch.setattr(ContractionBound, "series_constant", property(lambda self: 0.999))
        with pytest.raises(CertificateError, match="N‖𝒱w‖"):
            solve_fixed_point(ctx, w, lam, bound=bound)

    def test_threshold_error_with_hint(self):
        ctx = KernelContext(coupled(0.3), 0.0, 0, settings=SMALL)
        with pytest.raises(ThresholdError) as info:
            solve_fixed_point(ctx, source(ctx, 0.3, 0), 0.3, FAST_SEARCH)
        assert info.value.bound >= 0.5
        assert info.value.hint == pytest.approx(0.6952, rel=0.03)
        assert info.value.exit_code == 1

    def test_huge_coefficients_give_no_hint(self):
        e = ExpDecay([(50.0, 1.0)])
        spec = diagonal_system((1, -1), A=[[ZERO, e], [e, ZERO]])
        ctx = KernelContext(spec, 0.0, 0, settings=SMALL)
        settings = PicardSettings(search_ceiling=20.0, search_samples=4)
        with pytest.raises(ThresholdError) as info:
            solve_fixed_point(ctx, source(ctx, 0.5, 0), 0.5, settings)
        assert info.value.hint is None

    def test_iteration_cap(self):
        ctx = KernelContext(upper(0.01), 0.0, 1, settings=SMALL)
        with pytest.raises(DivergenceError):
            solve_fixed_point(ctx, source(ctx, 3.0, 1), 3.0, PicardSettings(max_iter=1))


class TestThresholds:
    """Empirical λ_α along rays."""

    def test_ray_threshold_matches_closed_form(self):
        # 4e^{1.2}·0.3·0.3/(1 + 2r) = 1/2
        expected = (0.72 * math.exp(1.2) - 1) / 2
        ctx = KernelContext(coupled(0.3), 0.0, 0, settings=SMALL)
        r = ray_threshold(ctx, 1.0, FAST_SEARCH)
        assert r == pytest.approx(expected, rel=0.03)
        assert contraction_bound(ctx, r).bound_V2 < 0.5

    def test_fss_threshold_covers_all_pivots(self):
        expected = (0.72 * math.exp(1.2) - 1) / 2
        value = fss_threshold(coupled(0.3), 0.0, [1.0], SMALL, FAST_SEARCH)
        assert value == pytest.approx(expected, rel=0.03)

    def test_threshold_decreases_with_alpha(self):
        values = [fss_threshold(coupled(0.3), alpha, [1.0], SMALL, FAST_SEARCH) for alpha in (0.0, 1.0)]
        assert values[1] < values[0]
