"""Tests for the second-order pencil reduction and its solutions."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from fsskit.coeffs import ExpDecay
from fsskit.errors import DomainError
from fsskit.kernels import KernelSettings
from fsskit.sturm import PencilSpec, pencil_fss, pencil_lambda, reduce_pencil

SMALL = KernelSettings(grid_size=24, refine_cells=2)
E1 = ExpDecay([(1.0, 1.0)])


class TestReduction:
    def test_free_pencil_has_no_coefficients(self):
        spec = reduce_pencil(PencilSpec())
        assert spec.b == (1 + 0j, -1 + 0j)
        assert all(e.is_zero for row in spec.A for e in row)
        assert spec.C == ()

    def test_coefficients(self):
        spec = reduce_pencil(PencilSpec(sigma=E1, p0=E1))
        x = np.array([0.0, 1.0])
        assert_allclose(spec.A[0][0](x), -0.5j * np.exp(-x))
        assert_allclose(spec.A[0][1](x), (1 - 0.5j) * np.exp(-x))
        assert_allclose(spec.A[1][0](x), (1 + 0.5j) * np.exp(-x))
        assert_allclose(spec.C[0][0][0](x), -0.5 * np.exp(-2 * x))
        assert_allclose(spec.C[0][1][1](x), 0.5 * np.exp(-2 * x))

    def test_lambda_mapping(self):
        assert pencil_lambda(2.0 - 1.0j) == (1.0 + 2.0j, False)
        lam, reflected = pencil_lambda(-3.0 + 1.0j)
        assert reflected and lam == pytest.approx(1.0 + 3.0j)
        with pytest.raises(DomainError):
            pencil_lambda(0)


class TestFreePencil:
    """σ = p₀ = 0 gives plane waves e^{∓izx}."""

    def test_plane_waves(self):
        z = -2.0
        solution = pencil_fss(PencilSpec(), 0.0, z, SMALL)
        x = np.linspace(0.0, 3.0, 7)
        u, q = solution.values(x)
        lam = solution.lam
        assert_allclose(u[:, 0], np.exp(lam * x), rtol=1e-9)
        assert_allclose(u[:, 1], np.exp(-lam * x), rtol=1e-9)
        assert_allclose(q[:, 0], lam * np.exp(lam * x), rtol=1e-9)
        assert solution.wronskian_at_alpha() == pytest.approx(-2 * lam)
        assert np.max(solution.residuals()[2]) < 1e-12

    def test_report(self):
        record = pencil_fss(PencilSpec(), 0.0, 3.0 - 0.5j, SMALL).to_dict()
        assert record["wronskian_abs"] == pytest.approx(2 * abs(3.0 - 0.5j))
        assert record["regularized_residual"] < 1e-6
        assert record["quasi_derivative_defect"] < 1e-7
        assert not record["reflected"]


class TestDecayingPencil:
    """σ = p₀ = e^{-x} solved from α = 5."""

    @pytest.fixture(scope="class")
    def pencil(self):
        return PencilSpec(sigma=E1, p0=E1, name="pencil-sigma")

    def test_regularized_equation(self, pencil):
        solution = pencil_fss(pencil, 5.0, 10.0 - 1.0j, SMALL)
        assert solution.system.checks["kronecker_at_alpha"]["passed"]
        assert solution.to_dict()["regularized_residual"] <= 1e-6
        assert solution.to_dict()["quasi_derivative_defect"] <= 1e-7
        assert abs(solution.wronskian_at_alpha()) == pytest.approx(2 * abs(solution.lam), rel=0.02)

    def test_residuals_are_small(self, pencil):
        solution = pencil_fss(pencil, 5.0, 10.0 - 1.0j, SMALL)
        assert np.max(solution.residuals()[2]) < 0.05

    def test_upper_half_plane_is_reflected(self, pencil):
        solution = pencil_fss(pencil, 5.0, -10.0 + 1.0j, SMALL)
        assert solution.reflected
        assert complex(solution.solved.p0(0.0)) == pytest.approx(-1.0)
        assert solution.to_dict()["regularized_residual"] <= 1e-6

    def test_rows(self, pencil):
        solution = pencil_fss(pencil, 5.0, 10.0 - 1.0j, SMALL)
        rows = solution.to_rows(np.array([0.0, 5.0, 6.0]))
        assert np.isnan(rows[0]["s11_re"])
        assert abs(rows[1]["s11_re"]) < 0.05
        assert {"u1_re", "u2q_im", "s22_im"} <= set(rows[0])
