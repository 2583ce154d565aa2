"""Tests for coefficient functions, tail norms and the phase."""
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from fsskit.coeffs import (
    ZERO,
    Combination,
    ExpDecay,
    PiecewisePolynomial,
    Tabulated,
    WeightFunction,
    coefficient_from_descriptor,
    parse_complex,
    tail_norms,
    weight_from_descriptor,
)
from fsskit.errors import DomainError, MalformedCoefficientError, OutOfRangeError, SpecError


class TestTailNorms:
    """L¹/L² tails on [α, ∞)."""

    def test_exponential_from_zero(self):
        norms = tail_norms(ExpDecay([(1.0, 1.0)]), 0.0)
        assert norms.l1 == pytest.approx(1.0, abs=1e-12)
        assert norms.l2 == pytest.approx(1 / math.sqrt(2), abs=1e-12)

    def test_exponential_from_one(self):
        norms = tail_norms(ExpDecay([(1.0, 1.0)]), 1.0)
        assert norms.l1 == pytest.approx(math.exp(-1), abs=1e-12)
        assert norms.l2 == pytest.approx(math.exp(-1) / math.sqrt(2), abs=1e-12)

    def test_zero_tabulated(self):
        f = Tabulated([0.0, 1.0, 2.0], [0.0, 0.0, 0.0])
        for alpha in (0.0, 0.5, 3.0):
            norms = tail_norms(f, alpha)
            assert norms.l1 == 0.0
            assert norms.l2 == 0.0

    def test_mixed_signs_use_quadrature(self):
        # e^{-x} - 2e^{-2x} changes sign at ln 2; each side contributes 1/4
        f = ExpDecay([(1.0, 1.0), (-2.0, 2.0)])
        assert tail_norms(f, 0.0).l1 == pytest.approx(0.5, abs=1e-9)

    def test_tails_are_nonincreasing(self):
        funcs = [
            ExpDecay([(0.5 + 0.5j, 1.0), (0.2, 3.0)]),
            PiecewisePolynomial([0.0, 1.0, 3.0], [[1.0, -1.0], [0.0, 0.5, -0.25]]),
            Tabulated([0.0, 1.0, 2.0, 4.0], [1.0, -1.0, 2.0, 0.5]),
        ]
        alphas = [0.0, 0.3, 1.0, 2.5, 5.0]
        for f in funcs:
            values = [tail_norms(f, a) for a in alphas]
            for prev, nxt in zip(values[:-1], values[1:]):
                assert nxt.l1 <= prev.l1 + 1e-10
                assert nxt.l2 <= prev.l2 + 1e-10
            assert values[-1].l1 <= 1e-2 * max(values[0].l1, 1e-12) + 1e-2

    def test_negative_alpha_rejected(self):
        with pytest.raises(DomainError):
            tail_norms(ExpDecay([(1.0, 1.0)]), -1.0)


class TestKinds:
    """Evaluation, antiderivatives and algebra."""

    def test_piecewise_evaluation_and_antiderivative(self):
        f = PiecewisePolynomial([0.0, 1.0, 2.0], [[1.0], [1.0, 1.0]])
        assert_allclose(f([0.5, 1.5, 2.5]), [1.0, 1.5, 0.0])
        assert_allclose(f.antiderivative([1.0, 2.0, 5.0]), [1.0, 2.5, 2.5])

    def test_tabulated_zero_extension(self):
        f = Tabulated([0.0, 2.0], [2.0, 0.0])
        assert_allclose(f([1.0, 3.0]), [1.0, 0.0])
        assert f.support_end == 2.0
        assert tail_norms(f, 0.0).l1 == pytest.approx(2.0)

    def test_tabulated_rejects_bad_knots(self):
        with pytest.raises(SpecError):
            Tabulated([0.0, 1.0, 1.0], [1.0, 2.0, 3.0])
        with pytest.raises(MalformedCoefficientError):
            Tabulated([0.0, 1.0], [1.0, float("nan")])

    def test_expdecay_rejects_growth(self):
        with pytest.raises(SpecError):
            ExpDecay([(1.0, -1.0)])

    def test_zero_propagates(self):
        f = ExpDecay([(1.0, 1.0)])
        assert (f * ZERO).is_zero
        assert (f * 0).is_zero
        assert_allclose((ZERO + f)([0.0, 1.0]), f([0.0, 1.0]))

    def test_expdecay_closed_under_product(self):
        f = ExpDecay([(2.0, 1.0)]) * ExpDecay([(3.0, 2.0)])
        assert isinstance(f, ExpDecay)
        assert f.terms == ((6.0 + 0j, 3.0),)

    def test_mixed_product_is_combination(self):
        f = ExpDecay([(1.0, 1.0)]) * Tabulated([0.0, 1.0], [1.0, 1.0])
        assert isinstance(f, Combination)
        assert f.l1_tail(0.0)[0] == pytest.approx(1 - math.exp(-1), abs=1e-9)
        assert complex(f.antiderivative(0.5)) == pytest.approx(1 - math.exp(-0.5), abs=1e-9)


class TestDescriptors:
    """Scenario descriptors."""

    def test_parse_complex_forms(self):
        assert parse_complex(2) == 2 + 0j
        assert parse_complex([1.0, -2.0]) == 1 - 2j
        assert parse_complex("1-2i") == 1 - 2j
        with pytest.raises(SpecError):
            parse_complex([1.0])

    def test_references_and_kinds(self):
        table = {"e": coefficient_from_descriptor({"kind": "expdecay", "terms": [[1.0, 1.0]]})}
        scaled = coefficient_from_descriptor({"kind": "scaled", "of": "e", "factor": 0.5}, table)
        assert complex(scaled(0.0)) == pytest.approx(0.5)
        summed = coefficient_from_descriptor({"kind": "sum", "parts": ["e", "e"]}, table)
        assert complex(summed(0.0)) == pytest.approx(2.0)
        assert coefficient_from_descriptor(0).is_zero

    def test_unknown_reference(self):
        with pytest.raises(SpecError):
            coefficient_from_descriptor("missing", {})
        with pytest.raises(SpecError):
            coefficient_from_descriptor({"kind": "spline"})

    def test_descriptor_reproduces_function(self):
        f = PiecewisePolynomial([0.0, 1.0, 2.0], [[1.0, 2.0], [0.5j]])
        g = coefficient_from_descriptor(f.descriptor())
        x = np.linspace(0, 2.5, 11)
        assert_allclose(g(x), f(x))


class TestWeightFunction:
    """ρ and the phase p."""

    def test_identity_weight(self):
        rho = WeightFunction(1.0)
        assert_allclose(rho.phase([0.0, 2.5]), [0.0, 2.5])
        assert_allclose(rho.phase_inverse([0.0, 2.5]), [0.0, 2.5])

    def test_constant_weight(self):
        assert float(WeightFunction(2.0).phase(3.0)) == pytest.approx(6.0)

    def test_perturbed_weight(self):
        rho = WeightFunction(1.0, ExpDecay([(1.0, 1.0)]))
        assert float(rho.phase(1.0)) == pytest.approx(2 - math.exp(-1), abs=1e-12)

    def test_round_trip(self):
        rho = WeightFunction(1.0, ExpDecay([(1.0, 1.0)]))
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 20, 25)
        back = rho.phase_inverse(rho.phase(x))
        assert np.all(np.abs(back - x) <= 1e-9 * (1 + x))

    def test_finite_mass_out_of_range(self):
        rho = WeightFunction(0.0, ExpDecay([(1.0, 1.0)]))
        assert rho.total_mass == pytest.approx(1.0)
        with pytest.raises(OutOfRangeError):
            rho.phase_inverse(2.0)

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(SpecError):
            WeightFunction(-1.0)
        with pytest.raises(SpecError):
            WeightFunction(1.0, ExpDecay([(-2.0, 1.0)]))

    def test_weight_descriptor(self):
        rho = weight_from_descriptor({"base": 2.0})
        assert rho.is_constant and rho.base == 2.0
        assert weight_from_descriptor(None).base == 1.0
