"""
Tests for finite free convolutions, root isolation and the quadrature identities.
"""

import itertools
import math

import numpy as np
import pytest

from core.errors import DomainError, NotRealRootedError
from core.finite_free import (
    MonicPoly,
    arcsine_reference,
    asymptotic_logdet_check,
    compress_subset_average,
    enum_perm_quadrature,
    enumerate_expected_charpoly_at,
    exact_quadrature,
    finite_free_additive,
    finite_free_compress,
    finite_free_multiplicative,
    finite_free_of_grids,
    finite_free_op,
    haar_unitary,
    horn_quantile_violation,
    mc_perm_quadrature,
    mc_quadrature,
    mc_unitary_quadrature,
    measure_of,
    oracle_relative_error,
    perm_expected_charpoly_at,
    permanent_interpolation,
    permanent_ryser,
    real_roots,
    sturm_chain,
    unitarity_error,
)
from core.measures import quantile_grid


class TestMonicPoly:
    """Test the polynomial container."""

    def test_from_roots(self):
        """Test (z − 1)(z − 2) = z² − 3z + 2."""
        p = MonicPoly.from_roots([1.0, 2.0])

        assert p.float_coeffs.tolist() == [2.0, -3.0, 1.0]
        assert p.degree == 2
        assert p(3.0) == 2.0

    def test_signed_elementary_round_trip(self):
        """Test a_i are the elementary symmetric functions of the roots."""
        p = MonicPoly.from_roots([1.0, 2.0, 3.0])

        assert [float(a) for a in p.signed_elementary()] == [1.0, 6.0, 11.0, 6.0]
        q = MonicPoly.from_signed_elementary(p.signed_elementary())
        assert q.float_coeffs.tolist() == p.float_coeffs.tolist()

    def test_requires_monic(self):
        """Test a leading coefficient other than 1 is rejected."""
        with pytest.raises(DomainError):
            MonicPoly((1.0, 2.0))


class TestConvolutions:
    """Test ⊞_N, ⊠_N and compression on known cases."""

    def test_additive_bernoulli_degree_two(self):
        """Test (z² − 1) ⊞₂ (z² − 1) = z² − 2."""
        p = MonicPoly.from_roots([-1.0, 1.0])

        assert finite_free_additive(p, p).float_coeffs.tolist() == pytest.approx([-2.0, 0.0, 1.0])

    def test_additive_with_point_mass_shifts(self):
        """Test (z − c)^N ⊞_N q shifts the roots of q by c."""
        shifted = finite_free_additive(
            MonicPoly.from_roots([1.0, 1.0, 1.0]), MonicPoly.from_roots([0.0, 2.0, 5.0])
        )

        assert real_roots(shifted) == pytest.approx([1.0, 3.0, 6.0], abs=1e-12)

    def test_multiplicative_with_point_mass_scales(self):
        """Test p ⊠_N (z − c)^N scales the roots of p by c."""
        scaled = finite_free_multiplicative(
            MonicPoly.from_roots([-1.0, 1.0, 3.0]), MonicPoly.from_roots([2.0, 2.0, 2.0])
        )

        assert real_roots(scaled) == pytest.approx([-2.0, 2.0, 6.0], abs=1e-12)

    def test_multiplicative_rejects_negative_factor(self):
        """Test factors after the first must have nonnegative roots."""
        p = MonicPoly.from_roots([1.0, 2.0])
        with pytest.raises(DomainError, match="negative root"):
            finite_free_multiplicative(p, MonicPoly.from_roots([-1.0, 1.0]))

    def test_degree_mismatch(self):
        """Test polynomials must share a degree."""
        with pytest.raises(DomainError, match="degree mismatch"):
            finite_free_additive(MonicPoly.from_roots([1.0]), MonicPoly.from_roots([1.0, 2.0]))

    def test_compression_derivative(self):
        """Test k!/N! p^(N−k) for (z − 1)(z − 2)(z − 3) and k = 1."""
        p = MonicPoly.from_roots([1.0, 2.0, 3.0])

        assert finite_free_compress(p, 1).float_coeffs.tolist() == pytest.approx([-2.0, 1.0])
        assert finite_free_compress(p, 3).float_coeffs.tolist() == p.float_coeffs.tolist()

    def test_compression_size_range(self):
        """Test k must lie in [1, N]."""
        with pytest.raises(DomainError):
            finite_free_compress(MonicPoly.from_roots([1.0, 2.0]), 0)

    def test_dispatch(self):
        """Test finite_free_op routes by kind."""
        p = MonicPoly.from_roots([0.5, 1.5])

        assert finite_free_op("add", [p, p]).coeffs == finite_free_additive(p, p).coeffs
        assert finite_free_op("minor", [p], k=1).coeffs == finite_free_compress(p, 1).coeffs
        with pytest.raises(DomainError):
            finite_free_op("comp", [p])


class TestRealRoots:
    """Test Sturm-based root isolation."""

    def test_simple_roots(self):
        """Test distinct roots come back sorted."""
        roots = real_roots(MonicPoly.from_roots([2.0, -1.0, 0.5]))

        assert roots == pytest.approx([-1.0, 0.5, 2.0], abs=1e-14)

    def test_repeated_roots(self):
        """Test multiplicities are recovered."""
        roots = real_roots(MonicPoly.from_roots([1.0, 1.0, 2.0, -3.0, -3.0, -3.0]))

        assert roots == pytest.approx([-3.0, -3.0, -3.0, 1.0, 1.0, 2.0], abs=1e-9)

    def test_clustered_roots(self):
        """Test nearly equal roots are separated."""
        roots = real_roots(MonicPoly.from_roots([1.0, 1.0 + 1e-9, 1.0 + 2e-9]))

        assert roots == pytest.approx([1.0, 1.0 + 1e-9, 1.0 + 2e-9], abs=1e-12)

    def test_not_real_rooted(self):
        """Test z² + 1 raises NotRealRootedError."""
        with pytest.raises(NotRealRootedError):
            real_roots(MonicPoly((1.0, 0.0, 1.0)))

    def test_sturm_chain_ends_in_gcd(self):
        """Test the chain of a squarefree polynomial ends in a constant."""
        p = MonicPoly.from_roots([0.0, 1.0, 2.0])

        assert len(sturm_chain(list(p.coeffs))[-1]) == 1

    def test_measure_of(self):
        """Test the root measure puts 1/N on each root."""
        m = measure_of(MonicPoly.from_roots([-1.0, 0.0, 4.0]))

        assert m.atoms.tolist() == pytest.approx([-1.0, 0.0, 4.0])
        assert m.weights.tolist() == pytest.approx([1 / 3] * 3)


class TestPermutationSide:
    """Test permanents, enumeration and the oracles they give."""

    def test_permanent_small(self):
        """Test perm of small matrices."""
        assert permanent_ryser(np.array([[1.0, 2.0], [3.0, 4.0]])) == pytest.approx(10.0)
        assert permanent_ryser(np.ones((5, 5))) == pytest.approx(120.0)

    def test_permanent_matches_enumeration(self, rng):
        """Test Ryser against the sum over all permutations."""
        matrix = rng.uniform(-1.0, 1.0, (6, 6))
        expected = math.fsum(
            math.prod(matrix[i, s[i]] for i in range(6))
            for s in itertools.permutations(range(6))
        )

        assert permanent_ryser(matrix) == pytest.approx(expected, rel=1e-9, abs=1e-12)

    @pytest.mark.parametrize("op", ["add", "mul"])
    def test_permanent_equals_enumeration(self, rng, op):
        """Test perm(M)/N! against the explicit average."""
        a, b = rng.uniform(0.1, 1.0, 5), rng.uniform(0.1, 1.0, 5)
        z = 3.0

        assert perm_expected_charpoly_at(a, b, z, op) == pytest.approx(
            enumerate_expected_charpoly_at(a, b, z, op), rel=1e-10
        )

    def test_additive_oracle(self, rng):
        """Test ⊞_N coefficients against the permanent at N + 1 nodes."""
        a, b = rng.uniform(-1.0, 1.0, 7), rng.uniform(-1.0, 1.0, 7)
        poly = finite_free_additive(MonicPoly.from_roots(a), MonicPoly.from_roots(b))

        assert oracle_relative_error(poly, a, b, "add") < 1e-10

    def test_multiplicative_oracle(self, rng):
        """Test ⊠_N coefficients against the permanent."""
        a, b = rng.uniform(0.1, 2.0, 6), rng.uniform(0.1, 2.0, 6)
        poly = finite_free_multiplicative(MonicPoly.from_roots(a), MonicPoly.from_roots(b))

        assert oracle_relative_error(poly, a, b, "mul") < 1e-10

    def test_interpolation_recovers_coefficients(self):
        """Test the interpolated polynomial equals ⊞_N for N = 3."""
        a, b = [-1.0, 0.0, 1.0], [0.0, 0.5, 2.0]
        poly = finite_free_additive(MonicPoly.from_roots(a), MonicPoly.from_roots(b))

        assert permanent_interpolation(a, b, "add").float_coeffs == pytest.approx(
            poly.float_coeffs, abs=1e-9
        )

    def test_compression_oracle(self, rng):
        """Test k!/N! p^(N−k) is the average over k-subsets of roots."""
        roots = rng.uniform(-1.0, 1.0, 7)
        p = MonicPoly.from_roots(roots)
        for k in range(1, 8):
            expected = compress_subset_average(roots, k, 2.0)
            assert finite_free_compress(p, k)(2.0) == pytest.approx(expected, rel=1e-12)

    def test_three_fold_enumeration(self):
        """Test the d = 3 average against nested ⊞_N."""
        diagonals = [[-1.0, 0.0, 1.0], [0.0, 1.0, 2.0], [0.5, 0.5, 1.5]]
        polys = [MonicPoly.from_roots(d) for d in diagonals]

        assert enum_perm_quadrature(diagonals, "add", 6.0) == pytest.approx(
            finite_free_additive(*polys)(6.0), rel=1e-12
        )

    def test_enumeration_cap(self):
        """Test the exhaustive average refuses N > 6."""
        with pytest.raises(DomainError):
            enum_perm_quadrature([np.zeros(7), np.zeros(7)], "add", 1.0)


class TestHaar:
    """Test the Haar unitary sampler."""

    def test_unitary(self):
        """Test U*U = I to rounding."""
        assert unitarity_error(haar_unitary(8, seed=3)) < 1e-12

    def test_seeded(self):
        """Test the same seed gives the same matrix."""
        assert np.array_equal(haar_unitary(4, seed=11), haar_unitary(4, seed=11))

    def test_first_entry_second_moment(self):
        """Test E|U₁₁|² = 1/n."""
        rng = np.random.default_rng(5)
        draws = np.array([abs(haar_unitary(3, seed=rng)[0, 0]) ** 2 for _ in range(4000)])
        stderr = draws.std(ddof=1) / math.sqrt(draws.size)

        assert abs(draws.mean() - 1.0 / 3.0) < 5.0 * stderr

    def test_size_cap(self):
        """Test n outside [1, HAAR_MAX_N] is rejected."""
        with pytest.raises(DomainError):
            haar_unitary(0)


class TestMonteCarlo:
    """Test unitary quadrature against the permutation side."""

    @pytest.mark.parametrize("op", ["add", "mul"])
    def test_two_diagonals(self, op):
        """Test E det(z − A ⊙ UBU*) within five standard errors."""
        a, b = [0.5, 1.0, 1.5], [0.25, 1.0, 2.0]
        z = 6.0
        exact = exact_quadrature([a, b], op, z)
        mc = mc_quadrature(a, b, op, z, samples=4000, seed=7)

        assert mc.samples == 4000
        assert mc.z_score(exact) < 5.0

    def test_minor(self):
        """Test E det(z − [UAU*]_k) against the compressed polynomial."""
        a = [-1.0, 0.0, 0.5, 1.0]
        exact = exact_quadrature([a], "minor", 2.0, k=2)
        mc = mc_unitary_quadrature([a], "minor", 2.0, samples=4000, seed=9, k=2)

        assert mc.z_score(exact) < 5.0

    def test_three_diagonals(self):
        """Test the d = 3 additive average."""
        diagonals = [[-1.0, 1.0], [0.0, 1.0], [0.5, 1.5]]
        exact = exact_quadrature(diagonals, "add", 5.0)
        mc = mc_unitary_quadrature(diagonals, "add", 5.0, samples=4000, seed=2)

        assert mc.z_score(exact) < 5.0

    def test_permutation_sampler(self):
        """Test sampled permutations agree with the exact permutation average."""
        a, b = [0.5, 1.0, 1.5, 2.0], [0.0, 1.0, 2.0, 3.0]
        exact = exact_quadrature([a, b], "add", 7.0)
        mc = mc_perm_quadrature([a, b], "add", 7.0, samples=4000, seed=4)

        assert mc.z_score(exact) < 5.0

    def test_thread_count_does_not_change_result(self):
        """Test chunked seeding makes the estimate independent of threads."""
        a, b = [0.5, 1.0, 1.5], [0.25, 1.0, 2.0]
        single = mc_quadrature(a, b, "add", 6.0, samples=3000, seed=1, threads=1)
        pooled = mc_quadrature(a, b, "add", 6.0, samples=3000, seed=1, threads=3)

        assert pooled.mean == single.mean
        assert pooled.stderr == single.stderr

    def test_minimum_samples(self):
        """Test tiny sample budgets are rejected."""
        with pytest.raises(DomainError):
            mc_quadrature([1.0], [1.0], "add", 3.0, samples=10, seed=0)


class TestConvergence:
    """Test finite free operations approach the free ones."""

    def test_grid_polynomial_degree(self, bern):
        """Test the grid polynomial has degree N and real roots in [−2, 2]."""
        poly = finite_free_of_grids("add", [bern, bern], 8)
        roots = real_roots(poly)

        assert poly.degree == 8
        assert roots[0] >= -2.0 and roots[-1] <= 2.0

    def test_compression_grid_size(self, bern):
        """Test floor(τN) sets the minor size."""
        assert finite_free_of_grids("comp", [bern], 8, tau=0.4).degree == 3

    def test_compression_empty_minor(self, bern):
        """Test floor(τN) = 0 is rejected."""
        with pytest.raises(DomainError):
            finite_free_of_grids("comp", [bern], 2, tau=0.3)

    @pytest.mark.slow
    def test_bernoulli_log_determinant(self, bern):
        """Test the arcsine log-potential is approached as N grows."""
        limit = math.log((3.0 + math.sqrt(5.0)) / 2.0)
        rows = asymptotic_logdet_check(
            [bern, bern], "add", 3.0, [8, 16, 32], reference=arcsine_reference()
        )

        assert all(r.limit == pytest.approx(limit, abs=1e-12) for r in rows)
        errors = [r.error for r in rows]
        assert errors[1] < errors[0] and errors[2] < errors[1]
        assert rows[-1].w1 < rows[0].w1

    def test_arcsine_reference(self):
        """Test the reference grid is symmetric with mean zero."""
        ref = arcsine_reference(16)

        assert ref.size == 16
        assert ref.mean == pytest.approx(0.0, abs=1e-14)
        assert ref.e_plus < 2.0

    def test_horn_quantile_bound(self, bern):
        """Test T_{μ⊞ν}(s + t − 1) ≤ T_μ(s) + T_ν(t) on the root measure."""
        approx = measure_of(finite_free_of_grids("add", [bern, bern], 16))
        levels = np.linspace(0.05, 1.0, 20)

        assert horn_quantile_violation(bern, bern, approx, levels) <= 1e-10
