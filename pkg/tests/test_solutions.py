"""Tests for FSS, large-sector systems, supplementation and analyticity checks."""
import cmath
import functools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fsskit.coeffs import ZERO, ExpDecay
from fsskit.errors import SectorError
from fsskit.kernels import KernelSettings, l2_along_ray
from fsskit.propagator import integrate_system
from fsskit.sectors import canonical_roots, compute_sectors, large_sector
from fsskit.solutions import (
    build_fss,
    build_large_sector,
    entry_function,
    overlap_agreement,
    perturb_column,
    residual_sup,
    sample_overlap,
    supplement_fss,
    verify_analyticity,
    verify_integral_residual,
)
from fsskit.system import diagonal_system

SMALL = KernelSettings(grid_size=24, refine_cells=2)


def e(c, beta=1.0):
    return ExpDecay([(c, beta)])


@pytest.fixture(scope="module")
def expdecay_n2():
    d, q = e(0.1), e(0.2)
    return diagonal_system((1, -1), A=[[d, q], [q, -d]], C=[[[e(0.2, 2.0), ZERO], [ZERO, e(0.2, 2.0)]]])


@functools.lru_cache(maxsize=None)
def roots_system(n):
    """b = n-th roots of unity, every off-diagonal entry of A equal to 0.1e^{-x}."""
    a = e(0.1)
    A = [[ZERO if j == k else a for k in range(n)] for j in range(n)]
    return diagonal_system(canonical_roots(n), A=A)


@pytest.fixture(scope="module")
def expdecay_n4():
    return roots_system(4)


@pytest.fixture(scope="module")
def laurent_n2():
    """C₁ = diag(2e^{-2x}) dominates a weak off-diagonal A."""
    q, c = e(0.02), e(2.0, 2.0)
    return diagonal_system((1, -1), A=[[ZERO, q], [q, ZERO]], C=[[[c, ZERO], [ZERO, c]]])


class TestTrivialSystem:
    """A = C = 0: the FSS is exactly diag(e^{λb_k x})."""

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_exact_exponentials(self, n):
        b = canonical_roots(n)
        spec = diagonal_system(b)
        lam = 3.0 * cmath.exp(1j * math.pi / (2 * n))
        system = build_fss(spec, 0.0, 1, lam, SMALL)
        x = np.linspace(0.0, 2.0, 9)
        Y = system.matrix(x)
        expected = np.stack([np.diag(np.exp(lam * np.asarray(b) * xi)) for xi in x])
        assert_allclose(Y, expected, rtol=1e-9, atol=1e-12)
        assert residual_sup(system) == 0.0
        assert verify_integral_residual(system) < 1e-12

    def test_extension_below_alpha(self):
        spec = diagonal_system((1, -1))
        lam = 2.0 + 1.0j
        system = build_fss(spec, 1.0, 1, lam, SMALL)
        Y = system.matrix(np.array([0.0, 0.5]))
        assert_allclose(Y[0], np.diag([np.exp(-lam), np.exp(lam)]), rtol=1e-8)

    def test_checks_and_rows(self):
        system = build_fss(diagonal_system((1, -1)), 0.0, 2, -2.0 + 0.5j, SMALL)
        assert all(c["passed"] for c in system.checks.values())
        rows = system.to_rows(np.array([0.0, 1.0]))
        assert set(rows[0]) == {"x"} | {f"y{j}{k}_{p}" for j in (1, 2) for k in (1, 2) for p in ("re", "im")}
        assert rows[0]["y11_re"] == pytest.approx(1.0)
        assert system.to_dict()["region"] == system.region

    def test_outside_sector(self):
        with pytest.raises(SectorError):
            build_fss(diagonal_system((1, -1)), 0.0, 1, -1.0 + 0.1j, SMALL)


class TestExpDecaySystem:
    """Small exponentially decaying A and C₁ with b = (1, −1)."""

    def test_certificates(self, expdecay_n2):
        system = build_fss(expdecay_n2, 0.0, 1, 10.0 + 2.0j, SMALL)
        assert system.checks["kronecker_at_alpha"]["passed"]
        assert system.checks["determinant_at_alpha"]["passed"]
        assert verify_integral_residual(system) < 1e-7
        for cert in system.certificates():
            assert cert["bound_V2"] < 0.5
            assert cert["ratio"] <= cert["bound_V2"] + 0.05
        assert residual_sup(system) < 0.1

    def test_solves_the_equation(self, expdecay_n2):
        lam = 10.0 + 2.0j
        system = build_fss(expdecay_n2, 0.0, 1, lam, SMALL)
        Y0, Y1 = system.matrix(np.array([0.0, 1.0]))
        forward = integrate_system(expdecay_n2, lam, 0.0, Y0[:, 0], 1.0)
        assert_allclose(forward.values[-1][:, 0], Y1[:, 0], rtol=1e-6)
        backward = integrate_system(expdecay_n2, lam, 1.0, Y1[:, 1], 0.0, t_eval=np.array([0.0]))
        assert_allclose(backward.values[0][:, 0], Y0[:, 1], rtol=1e-6)

    def test_perturbation_is_detected(self, expdecay_n2):
        system = build_fss(expdecay_n2, 0.0, 1, 10.0, SMALL)
        broken = perturb_column(system, 0, 1, 1e-2)
        assert verify_integral_residual(broken) > 5e-3

    def test_residuals_shrink_with_lambda(self, expdecay_n2):
        values = [residual_sup(build_fss(expdecay_n2, 0.0, 1, r, SMALL)) for r in (10.0, 30.0, 100.0)]
        assert values[0] > values[1] > values[2]

    def test_residuals_decay_tenfold(self, laurent_n2):
        # diagonal residual is e^{1/λ} − 1 on the real axis
        values = [residual_sup(build_fss(laurent_n2, 0.0, 1, r, SMALL)) for r in (10.0, 30.0, 100.0)]
        assert values[0] > values[1] > values[2]
        assert values[2] < 0.1 * values[0]
        assert_allclose(values, [math.expm1(1 / r) for r in (10.0, 30.0, 100.0)], rtol=0.02)

    def test_residual_tail_settles_along_ray(self, expdecay_n2):
        report = l2_along_ray(
            lambda lam: residual_sup(build_fss(expdecay_n2, 0.0, 1, lam, SMALL)),
            (10.0, 1.0),
            400.0,
            epsrel=1e-2,
            limit=4,
        )
        assert report.partials[2] > 0.0
        assert report.partials[2] - report.partials[1] < 0.05 * report.partials[2]
        assert report.stable

    def test_analytic_entry(self, expdecay_n2):
        f = entry_function(lambda lam: build_fss(expdecay_n2, 0.0, 1, lam, SMALL), 0, 0, 0.5)
        report = verify_analyticity(f, 10.0, 2.0, nodes=12)
        assert report.passed, report.to_dict()
        flagged = verify_analyticity(lambda lam: f(lam.conjugate()), 10.0, 2.0, nodes=12)
        assert not flagged.passed

    @pytest.mark.parametrize("kappa, sign", [(1, 1.0), (2, -1.0)])
    def test_analytic_entry_in_each_sector(self, expdecay_n2, kappa, sign):
        f = entry_function(lambda lam: build_fss(expdecay_n2, 0.0, kappa, lam, SMALL), 0, 0, 0.5)
        for r in (10.0, 15.0, 20.0, 25.0, 30.0):
            report = verify_analyticity(f, sign * r, 2.0, nodes=12)
            assert report.passed, report.to_dict()


class TestCauchyCheck:
    def test_entire_function(self):
        assert verify_analyticity(cmath.exp, 1.0 + 1.0j, 1.5, nodes=32).passed

    def test_conjugate_is_flagged(self):
        report = verify_analyticity(lambda lam: lam.conjugate() ** 2, 2.0, 1.0, nodes=32)
        assert not report.passed


class TestLargeSector:
    """u_m, …, u_n on Ω_m for b = n-th roots of unity."""

    def test_lambda_side(self, expdecay_n4):
        system = build_large_sector(expdecay_n4, 0.0, 2, 20.0, SMALL)
        assert system.side == "lambda"
        assert len(system.columns) == 3
        assert system.checks["kronecker_at_alpha"]["passed"]
        assert all(k in system.checks for k in ("envelope_u2", "envelope_u3", "envelope_u4"))
        assert verify_integral_residual(system) < 1e-7

    def test_outside_omega(self, expdecay_n4):
        with pytest.raises(SectorError):
            build_large_sector(expdecay_n4, 0.0, 2, 20.0 * cmath.exp(2.0j), SMALL)

    @pytest.mark.parametrize("side", ["gamma1", "gamma_sigma"])
    @pytest.mark.parametrize("n, m", [(3, 2), (4, 2), (4, 3), (4, 4)])
    def test_overlap_agreement(self, n, m, side):
        spec = roots_system(n)
        ls = large_sector(spec.b, m)
        region = ls.region_for(side)
        samples = sample_overlap(ls, side, 20, 20.0, seed=7)
        assert len(samples) == 20
        for lam in samples:
            assert ls.lam.contains(lam) and region.contains(lam)
            assert overlap_agreement(spec, 0.0, m, lam, SMALL) < 1e-6

    @pytest.mark.parametrize(
        "side, angle", [("lambda", 0.0), ("gamma1", 3 * math.pi / 16), ("gamma_sigma", -3 * math.pi / 16)]
    )
    def test_analytic_entry_in_each_region(self, expdecay_n4, side, angle):
        m = 2
        ls = large_sector(expdecay_n4.b, m)
        # column 0 holds u_m, so u_mm is row m − 1 of it
        f = entry_function(lambda lam: build_large_sector(expdecay_n4, 0.0, m, lam, SMALL), m - 1, 0, 0.5)
        for r in (20.0, 24.0, 28.0, 32.0, 36.0):
            center = cmath.rect(r, angle)
            assert ls.side_of(center) == side
            report = verify_analyticity(f, center, 1.0, nodes=12)
            assert report.passed, report.to_dict()

    def test_supplemented_system(self, expdecay_n4):
        lam = 20.0 * cmath.exp(0.5j)
        kappa = compute_sectors(expdecay_n4.b).find(lam).kappa
        fss = build_fss(expdecay_n4, 0.0, kappa, lam, SMALL)
        large = build_large_sector(expdecay_n4, 0.0, 2, lam, SMALL)
        assert large.side == "gamma1"
        combined = supplement_fss(large, fss)
        assert len(combined.columns) == 4
        assert combined.checks["determinant_at_alpha"]["passed"]
