"""Tests for sector geometry, large sectors and ordering checks."""
import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fsskit.errors import DomainError, SectorError
from fsskit.sectors import (
    canonical_roots,
    check_ordering,
    compute_sectors,
    large_sector,
    ordering_margin,
    sample_closure,
)


class TestComputeSectors:
    """Small sectors Γ_κ."""

    def test_two_half_planes(self):
        geometry = compute_sectors((1, -1))
        assert len(geometry.sectors) == 2
        first = geometry.sector(1)
        assert first.lo == pytest.approx(-math.pi / 2)
        assert first.hi == pytest.approx(math.pi / 2)
        assert first.permutation == (0, 1)
        assert geometry.sector(2).permutation == (1, 0)

    def test_quarter_planes(self):
        geometry = compute_sectors((1, -1), quarter_planes=True)
        assert len(geometry.sectors) == 4
        assert [s.opening for s in geometry.sectors] == pytest.approx([math.pi / 2] * 4)
        with pytest.raises(SectorError):
            compute_sectors(canonical_roots(3), quarter_planes=True)

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_roots_of_unity_wedges(self, n):
        geometry = compute_sectors(canonical_roots(n))
        assert geometry.roots_of_unity
        assert len(geometry.sectors) == 2 * n
        for s in geometry.sectors:
            assert s.opening == pytest.approx(math.pi / n, abs=1e-12)
        first = geometry.sector(1)
        assert first.lo_frac == Fraction(0) and first.hi_frac == Fraction(1, n)

    def test_first_sector_uses_canonical_order(self):
        for n in (3, 4):
            assert compute_sectors(canonical_roots(n)).sector(1).permutation == tuple(range(n))

    def test_sectors_cover_plane(self):
        geometry = compute_sectors((1, 2j, -1 - 1j))
        rng = np.random.default_rng(11)
        for theta in rng.uniform(0, 2 * math.pi, 200):
            assert geometry.find(cmath.exp(1j * theta)) is not None
        assert sum(s.opening for s in geometry.sectors) == pytest.approx(2 * math.pi)

    def test_ordering_within_closures(self):
        geometry = compute_sectors(canonical_roots(3))
        per_sector = 10_000 // len(geometry.sectors)
        for sector in geometry.sectors:
            for lam in sample_closure(sector, per_sector, radius=5.0):
                values = [(lam * geometry.b[p]).real for p in sector.permutation]
                assert all(a >= b - 1e-12 * 5 for a, b in zip(values[:-1], values[1:]))

    def test_find_rejects_zero(self):
        with pytest.raises(DomainError):
            compute_sectors((1, -1)).find(0j)

    def test_records_are_one_based(self):
        record = compute_sectors((1, -1)).sector(2).to_record()
        assert record["kappa"] == 2
        assert record["permutation"] == [2, 1]


class TestCanonicalRoots:
    def test_order_for_four(self):
        assert_allclose(canonical_roots(4), [1, -1j, 1j, -1], atol=1e-15)

    def test_order_for_three(self):
        w = cmath.exp(2j * math.pi / 3)
        assert_allclose(canonical_roots(3), [1, w.conjugate(), w], atol=1e-15)


class TestLargeSector:
    """Ω_m, σ, ω and Λ."""

    def test_n4_m2(self):
        ls = large_sector(canonical_roots(4), 2)
        assert ls.region.lo_frac == Fraction(-1, 4) and ls.region.hi_frac == Fraction(1, 4)
        assert ls.sigma == 8
        assert ls.omega == pytest.approx(cmath.exp(-1j * math.pi / 4), abs=1e-14)
        assert ls.lam.lo_frac == Fraction(-1, 8) and ls.lam.hi_frac == Fraction(1, 8)
        assert ls.region.lo == -math.pi / 4

    def test_n4_m3(self):
        ls = large_sector(canonical_roots(4), 3)
        assert ls.sigma == 2
        assert ls.region.lo_frac == Fraction(0) and ls.region.hi_frac == Fraction(1, 2)
        assert ls.lam.lo_frac == Fraction(1, 8) and ls.lam.hi_frac == Fraction(3, 8)

    def test_sides(self):
        ls = large_sector(canonical_roots(4), 2)
        assert ls.side_of(cmath.exp(0.05j)) == "lambda"
        assert ls.side_of(cmath.exp(0.7j)) == "gamma1"
        assert ls.side_of(cmath.exp(-0.7j)) == "gamma_sigma"
        with pytest.raises(SectorError):
            ls.side_of(cmath.exp(2.0j))

    def test_requires_canonical_numbering(self):
        with pytest.raises(SectorError):
            large_sector((1, 1j, -1j, -1), 2)
        with pytest.raises(SectorError):
            large_sector(canonical_roots(4), 1)
        with pytest.raises(SectorError):
            large_sector((1, -1), 2)
        assert large_sector((1, -1), 2, quarter_planes=True).sigma == 4

    @pytest.mark.parametrize("n,m", [(3, 2), (4, 2), (4, 3), (4, 4)])
    def test_ordering_on_boundaries(self, n, m):
        b = canonical_roots(n)
        geometry = compute_sectors(b)
        ls = large_sector(b, m)
        samples = 10_000 // 3
        for side in ("lambda", "gamma1", "gamma_sigma"):
            region = ls.region_for(side)
            omega = ls.omega_for(side)
            for lam in sample_closure(region, samples, radius=3.0):
                check = check_ordering(geometry, region, omega, lam, m - 1)
                assert check.ok, (side, lam, check.margin)

    def test_ordering_violation_detected(self):
        b = canonical_roots(4)
        assert ordering_margin(b, range(4), b[1], cmath.exp(2.5j), 1) < 0

    def test_check_ordering_outside_region(self):
        b = canonical_roots(4)
        ls = large_sector(b, 2)
        with pytest.raises(SectorError):
            check_ordering(compute_sectors(b), ls.lam, ls.omega, cmath.exp(1.0j), 1)
