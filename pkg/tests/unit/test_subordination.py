"""
Tests for the subordination solvers and the quantities derived from them.
"""

import math

import numpy as np
import pytest

from core.config import settings
from core.ctransforms import cauchy_G, r_transform, s_transform
from core.errors import DomainError
from core.measures import classical_convolve, log_potential, make_measure, point_mass
from core.operations import OperationKind
from core.subordination import (
    compressed_r_transform,
    free_cauchy,
    free_cauchy_inverse,
    free_convolve_grid,
    free_log_potential,
    free_moments,
    free_r_transform,
    free_s_transform,
    free_support_bound,
    solve_additive,
    solve_additive_many,
    solve_compression,
    solve_free,
    solve_multiplicative,
    solve_multiplicative_many,
)

SQRT5 = math.sqrt(5.0)


class TestAdditive:
    """Test μ ⊞ ν through subordination."""

    def test_bernoulli_arcsine(self, bern):
        """Test Bernoulli ⊞ Bernoulli is the arcsine law on [−2, 2]."""
        sol = solve_additive(bern, bern, 3.0)

        assert sol.omega == pytest.approx(SQRT5, rel=1e-12)
        assert sol.omega_mu == pytest.approx((3.0 + SQRT5) / 2.0, rel=1e-12)
        assert free_cauchy(sol) == pytest.approx(1.0 / SQRT5, rel=1e-12)
        assert free_log_potential(sol, bern, bern) == pytest.approx(
            math.log((3.0 + SQRT5) / 2.0), rel=1e-12
        )
        assert sol.residual < settings.INVARIANT_TOL

    def test_point_mass_shifts(self, skewed):
        """Test δ_c ⊞ μ is μ shifted by c."""
        z = 4.0
        sol = solve_additive(point_mass(0.7), skewed, z)

        assert free_cauchy(sol) == pytest.approx(cauchy_G(skewed, z - 0.7), rel=1e-12)

    def test_two_point_masses(self):
        """Test δ_a ⊞ δ_b = δ_(a+b)."""
        sol = solve_additive(point_mass(1.0), point_mass(-0.25), 2.0)

        assert free_cauchy(sol) == pytest.approx(1.0 / 1.25)

    def test_three_fold_identities(self, bern, skewed):
        """Test Σ ω_j = (d − 1) ω + z for d = 3."""
        z = 5.0
        sol = solve_additive_many([bern, skewed, bern], z)

        assert sol.arity == 3
        assert sum(sol.marginal_omegas) == pytest.approx(2 * sol.omega + z, rel=1e-12)
        for m, w in zip([bern, skewed, bern], sol.marginal_omegas):
            assert cauchy_G(m, w) == pytest.approx(1.0 / sol.omega, rel=1e-9)

    def test_z_inside_support_bound(self, bern):
        """Test z ≤ E+(μ) + E+(ν) is rejected."""
        with pytest.raises(DomainError):
            solve_additive(bern, bern, 2.0)

    def test_needs_two_measures(self, bern):
        """Test a single measure is not an additive problem."""
        with pytest.raises(DomainError):
            solve_additive_many([bern], 3.0)

    def test_free_dominates_classical(self, bern, skewed):
        """Test the free log-potential exceeds the classical one."""
        z = 3.0
        free = free_log_potential(solve_additive(bern, skewed, z), bern, skewed)
        classical = log_potential(classical_convolve(bern, skewed, "add"), z)

        assert free >= classical - 1e-12


class TestMultiplicative:
    """Test μ ⊠ ν through subordination."""

    def test_identity_factor(self, positive_two_point, delta_one):
        """Test μ ⊠ δ₁ = μ."""
        z = 3.0
        sol = solve_multiplicative(positive_two_point, delta_one, z)

        assert free_cauchy(sol) == pytest.approx(cauchy_G(positive_two_point, z), rel=1e-12)

    def test_identities_hold(self, positive_two_point):
        """Test Π ω_j = z(ω + 1) and ω_j G_j(ω_j) = 1 + 1/ω."""
        other = make_measure([0.5, 1.0, 3.0], [0.3, 0.3, 0.4])
        z = 8.0
        sol = solve_multiplicative(positive_two_point, other, z)

        assert sol.omega_mu * sol.omega_nu == pytest.approx(z * (sol.omega + 1.0), rel=1e-10)
        assert sol.omega_mu * cauchy_G(positive_two_point, sol.omega_mu) == pytest.approx(
            1.0 + 1.0 / sol.omega, rel=1e-10
        )

    def test_three_factors(self, positive_two_point):
        """Test the d-fold product equation."""
        z = 10.0
        sol = solve_multiplicative_many([positive_two_point] * 3, z)

        assert math.prod(sol.marginal_omegas) == pytest.approx(
            z * (sol.omega + 1.0) ** 2, rel=1e-10
        )

    def test_negative_support_rejected(self, bern, positive_two_point):
        """Test factors must live on [0, ∞)."""
        with pytest.raises(DomainError):
            solve_multiplicative(bern, positive_two_point, 10.0)

    def test_z_inside_support_bound(self, positive_two_point):
        """Test z ≤ E+(μ)·E+(ν) is rejected."""
        with pytest.raises(DomainError):
            solve_multiplicative(positive_two_point, positive_two_point, 4.0)


class TestCompression:
    """Test [μ]_τ through subordination."""

    def test_bernoulli_half(self, bern):
        """Test [Bernoulli]_½ is the arcsine law on [−1, 1]."""
        sol = solve_compression(bern, 0.5, math.sqrt(2.0))

        assert sol.omega == pytest.approx(1.0 + math.sqrt(2.0), rel=1e-12)
        assert free_cauchy(sol) == pytest.approx(1.0, rel=1e-12)

    def test_point_mass_is_fixed(self):
        """Test [δ_c]_τ = δ_c for the Cauchy transform and the log-potential."""
        sol = solve_compression(point_mass(0.5), 0.3, 2.0)

        assert free_cauchy(sol) == pytest.approx(1.0 / 1.5)
        assert free_log_potential(sol, point_mass(0.5)) == pytest.approx(math.log(1.5))

    def test_relation_to_additive_power(self, skewed):
        """Test G of [μ]_½ at z equals 2 G of μ ⊞ μ at 2z."""
        z = 2.5
        half = free_cauchy(solve_compression(skewed, 0.5, z))
        doubled = free_cauchy(solve_additive(skewed, skewed, 2.0 * z))

        assert half == pytest.approx(2.0 * doubled, rel=1e-10)

    @pytest.mark.parametrize("tau", [0.0, 1.0, 1.5])
    def test_tau_out_of_range(self, bern, tau):
        """Test τ must lie in (0, 1)."""
        with pytest.raises(DomainError):
            solve_compression(bern, tau, 3.0)

    def test_dispatch_requires_tau(self, bern):
        """Test solve_free needs τ for compression."""
        with pytest.raises(DomainError, match="tau"):
            solve_free("comp", [bern], 3.0)


class TestDerivedQuantities:
    """Test grids, inverses and transforms built on the solvers."""

    def test_support_bounds(self, bern, positive_two_point):
        """Test the bound for each operation kind."""
        assert free_support_bound("add", [bern, bern]) == 2.0
        assert free_support_bound("mul", [positive_two_point] * 2) == 4.0
        assert free_support_bound("comp", [bern]) == 1.0

    def test_grid_derivative_matches_cauchy(self, bern, skewed):
        """Test d/dz of the log-potential reproduces G."""
        rows = free_convolve_grid(bern, skewed, OperationKind.ADDITIVE, [3.0, 4.0, 10.0])

        assert [r.z for r in rows] == [3.0, 4.0, 10.0]
        assert all(r.mismatch < 1e-6 for r in rows)

    def test_grid_for_compression(self, skewed):
        """Test the grid ignores ν for compression."""
        rows = free_convolve_grid(skewed, None, "comp", [2.0, 3.0], tau=0.4)

        assert len(rows) == 2
        assert all(r.mismatch < 1e-6 for r in rows)

    def test_free_cauchy_inverse(self, bern):
        """Test inverting the arcsine Cauchy transform."""
        z = free_cauchy_inverse("add", [bern, bern], 1.0 / SQRT5)

        assert z == pytest.approx(3.0, rel=1e-10)

    def test_r_transform_is_additive(self, bern, skewed):
        """Test R_(μ⊞ν) = R_μ + R_ν."""
        s = 0.3
        expected = r_transform(bern, s) + r_transform(skewed, s)

        assert free_r_transform(bern, skewed, s) == pytest.approx(expected, abs=1e-9)

    def test_compressed_r_transform(self, skewed):
        """Test R of [μ]_τ at s equals R_μ(τ s)."""
        tau, s = 0.4, 0.2

        assert compressed_r_transform(skewed, tau, s) == pytest.approx(
            r_transform(skewed, tau * s), abs=1e-9
        )

    def test_s_transform_is_multiplicative(self, positive_two_point):
        """Test S_(μ⊠ν) = S_μ S_ν."""
        other = make_measure([1.0, 3.0], [0.25, 0.75])
        w = 0.1
        expected = s_transform(positive_two_point, w) * s_transform(other, w)

        assert free_s_transform(positive_two_point, other, w) == pytest.approx(
            expected, rel=1e-8
        )


class TestMoments:
    """Test moments read from the large-z expansion."""

    def test_additive_moments_match_classical(self, bern, skewed):
        """Test the first three moments of ⊞ agree with the classical convolution."""
        classical = classical_convolve(bern, skewed, "add")
        moments = free_moments("add", [bern, skewed], order=3)

        expected = [np.dot(classical.weights, classical.atoms**k) for k in (1, 2, 3)]
        assert moments == pytest.approx(expected, abs=1e-7)

    def test_arcsine_moments(self, bern):
        """Test m_1..m_4 of the arcsine law on [−2, 2]."""
        moments = free_moments("add", [bern, bern], order=4)

        assert moments == pytest.approx([0.0, 2.0, 0.0, 6.0], abs=1e-6)

    def test_multiplicative_mean(self, positive_two_point):
        """Test the mean of μ ⊠ ν is the product of means."""
        other = make_measure([0.5, 2.0])
        mean = free_moments("mul", [positive_two_point, other], order=1)[0]

        assert mean == pytest.approx(1.5 * 1.25, abs=1e-7)

    def test_compression_keeps_mean(self, skewed):
        """Test [μ]_τ has the mean of μ."""
        mean = free_moments("comp", [skewed], order=1, tau=0.3)[0]

        assert mean == pytest.approx(skewed.mean, abs=1e-8)
