import os
import sys
import math
import unittest
from unittest.mock import patch

import numpy as np
from scipy import stats

# 將專案根目錄加入路徑以便導入模組
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from bodies import Halfspace, Polytope, cube, l2_ball
from errors import BudgetError, DimensionError, DomainError, NormalizationError, ParameterError
from estimators import (HermiteExpansion, attenuated_concentration_check, ball_gsa_bound,
                        berry_esseen_check, boppana_check, estimate_directional_influence,
                        estimate_distance, estimate_gns, estimate_hermite_coeff,
                        estimate_influence_dilation, estimate_influence_hermite, estimate_stability,
                        estimate_total_influence, estimate_two_point, estimate_volume,
                        gns_from_stability, gsa_ball_analytic, hypervariance,
                        iid_tail_check, iid_tail_exact_chi2, influential_direction_fraction,
                        is_attenuated, isoperimetric_gsa_lower_bound, l2_error,
                        level2_diagonal_coeffs, low_degree_projection, multi_indices,
                        nazarov_gsa_bound, noise_operator, normalize_population,
                        parseval_distance_lb, stability_from_coeffs, tail_ratio_without_replacement,
                        zoom_collapse_curve, zoom_variance_profile)
from gaussian_core import Estimate, RandomStream

K_SIGMA = 4.0


class TestVolumeAndDistance(unittest.TestCase):

    def test_ball_volume(self):
        ball = l2_ball(3, math.sqrt(3.0))
        estimate = estimate_volume(ball, 100_000, RandomStream(seed=1))
        self.assertTrue(estimate.agrees_with(float(stats.chi2.cdf(3.0, 3)), K_SIGMA))
        self.assertLessEqual(estimate.ci_low, estimate.value)
        self.assertGreaterEqual(estimate.ci_high, estimate.value)

    def test_distance_to_itself_is_zero(self):
        ball = l2_ball(4, 2.0)
        estimate = estimate_distance(ball, ball, 10_000, RandomStream(seed=2))
        self.assertEqual(estimate.value, 0.0)

    def test_distance_between_nested_balls(self):
        inner, outer = l2_ball(2, 1.0), l2_ball(2, 2.0)
        expected = float(stats.chi2.cdf(4.0, 2) - stats.chi2.cdf(1.0, 2))
        estimate = estimate_distance(inner, outer, 100_000, RandomStream(seed=3))
        self.assertTrue(estimate.agrees_with(expected, K_SIGMA))

    def test_distance_dimension_mismatch(self):
        with self.assertRaises(DimensionError):
            estimate_distance(l2_ball(2, 1.0), l2_ball(3, 1.0), 100, RandomStream(seed=1))

    def test_zero_samples_rejected(self):
        with self.assertRaises(ParameterError):
            estimate_volume(l2_ball(2, 1.0), 0, RandomStream(seed=1))


class TestInfluence(unittest.TestCase):

    def setUp(self):
        self.n = 3
        self.radius = math.sqrt(3.0)
        self.ball = l2_ball(self.n, self.radius)
        # d/dδ Vol((1+δ)B_r) 在 δ = 0 的值
        self.exact = self.radius * float(stats.chi.pdf(self.radius, self.n))

    def test_total_influence_of_ball(self):
        estimate = estimate_total_influence(self.ball, 200_000, RandomStream(seed=4))
        self.assertTrue(estimate.agrees_with(self.exact, K_SIGMA))

    def test_hermite_path_matches_direct_path(self):
        direct = estimate_total_influence(self.ball, 50_000, RandomStream(seed=5))
        hermite = estimate_influence_hermite(self.ball, 50_000, RandomStream(seed=5))
        self.assertAlmostEqual(direct.value, hermite.value, places=9)

    def test_dilation_path(self):
        estimate = estimate_influence_dilation(self.ball, 0.02, 200_000, RandomStream(seed=6),
                                               richardson=True)
        self.assertTrue(estimate.agrees_with(self.exact, K_SIGMA, rel_slack=0.02))

    def test_dilation_rejects_large_step(self):
        with self.assertRaises(ParameterError):
            estimate_influence_dilation(self.ball, 0.5, 1000, RandomStream(seed=6))
        with self.assertRaises(ParameterError):
            estimate_influence_dilation(self.ball, 0.01, 1000, None)

    def test_directional_influence_is_share_of_total(self):
        estimate = estimate_directional_influence(self.ball, [0.0, 1.0, 0.0], 200_000,
                                                  RandomStream(seed=7))
        self.assertTrue(estimate.agrees_with(self.exact / self.n, K_SIGMA))

    def test_direction_must_be_unit(self):
        with self.assertRaises(ParameterError):
            estimate_directional_influence(self.ball, [1.0, 1.0, 0.0], 100, RandomStream(seed=7))
        with self.assertRaises(DimensionError):
            estimate_directional_influence(self.ball, [1.0, 0.0], 100, RandomStream(seed=7))

    def test_level2_coefficients(self):
        coeffs = level2_diagonal_coeffs(self.ball, 50_000, RandomStream(seed=8))
        self.assertEqual(len(coeffs), self.n)
        total = -math.sqrt(2.0) * sum(c.value for c in coeffs)
        direct = estimate_total_influence(self.ball, 50_000, RandomStream(seed=8))
        self.assertAlmostEqual(total, direct.value, places=6)

    def test_influential_direction_fraction(self):
        result = influential_direction_fraction(self.ball, 0.05, 50_000, RandomStream(seed=9))
        self.assertEqual(len(result.influences), self.n)
        self.assertEqual(result.fraction, 1.0)
        with self.assertRaises(ParameterError):
            influential_direction_fraction(self.ball, 0.0, 100, RandomStream(seed=9))


class TestNoiseSensitivity(unittest.TestCase):

    def setUp(self):
        self.halfspace = Halfspace([1.0, 0.0], 0.0)

    def test_gns_of_halfspace_through_origin(self):
        rho = 0.1
        expected = math.acos(1.0 - 2.0 * rho) / math.pi
        estimate = estimate_gns(self.halfspace, rho, 100_000, RandomStream(seed=10))
        self.assertTrue(estimate.agrees_with(expected, K_SIGMA))

    def test_gns_from_stability(self):
        rho = 0.2
        stability = estimate_stability(self.halfspace, 1.0 - 2.0 * rho, 100_000, RandomStream(seed=11))
        converted = gns_from_stability(stability)
        expected = math.acos(1.0 - 2.0 * rho) / math.pi
        self.assertTrue(converted.agrees_with(expected, K_SIGMA))
        self.assertAlmostEqual(converted.stderr, 0.5 * stability.stderr)

    def test_rho_range(self):
        with self.assertRaises(ParameterError):
            estimate_gns(self.halfspace, 0.6, 100, RandomStream(seed=1))
        with self.assertRaises(ParameterError):
            estimate_stability(self.halfspace, 1.5, 100, RandomStream(seed=1))


class TestZoom(unittest.TestCase):

    def test_zero_zoom_has_no_variance(self):
        profile = zoom_variance_profile(cube(3, 1.0), 0.0, 20, 50, RandomStream(seed=12))
        self.assertEqual(profile.mean_variance.value, 0.0)
        self.assertEqual(len(profile.per_anchor_variance), 20)
        self.assertEqual(set(profile.quantiles), {"q05", "q25", "q50", "q75", "q95"})

    def test_full_zoom_matches_volume_variance(self):
        box = cube(2, 1.0)
        volume = float(stats.norm.cdf(1.0) - stats.norm.cdf(-1.0)) ** 2
        profile = zoom_variance_profile(box, 1.0, 50, 2000, RandomStream(seed=13))
        self.assertAlmostEqual(profile.mean_variance.value, 4.0 * volume * (1.0 - volume), delta=0.02)

    def test_profile_rejects_bad_inputs(self):
        with self.assertRaises(ParameterError):
            zoom_variance_profile(cube(2, 1.0), 1.2, 10, 10, RandomStream(seed=1))
        with self.assertRaises(ParameterError):
            zoom_variance_profile(cube(2, 1.0), 0.5, 1, 10, RandomStream(seed=1))

    def test_collapse_curve_shape(self):
        curve = zoom_collapse_curve(cube(3, 1.0), [0.0, 1.0, 0.5], [0.1, 0.5],
                                    40, 200, RandomStream(seed=14))
        self.assertEqual(curve.lambdas, [1.0, 0.5, 0.0])
        self.assertEqual(len(curve.exceedance), 3)
        self.assertEqual(curve.exceedance[-1], [0.0, 0.0])
        self.assertEqual(len(curve.monotone), 2)

    def test_collapse_needs_facets(self):
        with self.assertRaises(ParameterError):
            zoom_collapse_curve(Polytope(2, [], []), [0.5], [0.1], 10, 10, RandomStream(seed=1))


class TestHermite(unittest.TestCase):

    def test_zero_index_is_volume(self):
        ball = l2_ball(2, 1.0)
        coeff = estimate_hermite_coeff(ball, (0, 0), 20_000, RandomStream(seed=15))
        volume = estimate_volume(ball, 20_000, RandomStream(seed=15))
        self.assertAlmostEqual(coeff.value, volume.value, places=9)

    def test_coefficient_order_budget(self):
        with self.assertRaises(BudgetError):
            estimate_hermite_coeff(l2_ball(2, 1.0), (5, 4), 100, RandomStream(seed=1))
        with self.assertRaises(DimensionError):
            estimate_hermite_coeff(l2_ball(2, 1.0), (1,), 100, RandomStream(seed=1))

    def test_halfspace_first_order_coefficient(self):
        halfspace = Halfspace([1.0, 0.0], 0.0)
        expected = -1.0 / math.sqrt(2.0 * math.pi)
        coeff = estimate_hermite_coeff(halfspace, (1, 0), 100_000, RandomStream(seed=16))
        self.assertTrue(coeff.agrees_with(expected, K_SIGMA))

    def test_expansion_algebra(self):
        g = HermiteExpansion(2, {(0, 0): 1.0, (1, 0): 0.5, (1, 1): 0.25})
        self.assertEqual(g.degree(), 2)
        self.assertAlmostEqual(g.variance(), 0.25 + 0.0625)
        self.assertAlmostEqual(noise_operator(g, 0.5).coeff((1, 1)), 0.0625)
        self.assertAlmostEqual(hypervariance(g, 2.0), 4.0 * 0.25 + 16.0 * 0.0625)
        self.assertAlmostEqual(stability_from_coeffs(g, 0.5), 1.0 + 0.5 * 0.25 + 0.25 * 0.0625)
        np.testing.assert_allclose(g.evaluate([[1.0, 2.0]]), [1.0 + 0.5 + 0.25 * 2.0])
        with self.assertRaises(ParameterError):
            hypervariance(g, 0.5)

    def test_expansion_dict_format(self):
        g = HermiteExpansion(2, {(0, 0): 1.0, (2, 1): -0.5})
        restored = HermiteExpansion.from_dict(g.to_dict())
        self.assertEqual(restored.coeffs, g.coeffs)
        with self.assertRaises(ParameterError):
            HermiteExpansion.from_dict({"dim": 2})

    def test_two_point_matches_coefficients(self):
        g = HermiteExpansion(2, {(0, 0): 0.5, (1, 0): 0.4, (0, 2): 0.3})
        estimate = estimate_two_point(g, 0.6, 100_000, RandomStream(seed=17))
        self.assertTrue(estimate.agrees_with(stability_from_coeffs(g, 0.6), K_SIGMA))

    def test_multi_indices(self):
        indices = multi_indices(3, 2)
        self.assertEqual(len(indices), math.comb(5, 2))
        self.assertEqual(indices[0], (0, 0, 0))
        self.assertIn((1, 0, 1), indices)
        self.assertTrue(all(sum(a) <= 2 for a in indices))

    @patch('config.MULTI_INDEX_BUDGET', 5)
    def test_multi_index_budget(self):
        with self.assertRaises(BudgetError):
            multi_indices(3, 2)

    def test_projection_methods_agree(self):
        halfspace = Halfspace([1.0, 0.0], 0.0)
        expected = -1.0 / math.sqrt(2.0 * math.pi)
        mean = low_degree_projection(halfspace, 1, 100_000, RandomStream(seed=18))
        fitted = low_degree_projection(halfspace, 1, 100_000, RandomStream(seed=18),
                                       method="least_squares")
        self.assertIsNotNone(mean.estimates)
        self.assertAlmostEqual(mean.coeff((1, 0)), expected, delta=0.01)
        self.assertAlmostEqual(fitted.coeff((1, 0)), expected, delta=0.01)
        self.assertAlmostEqual(fitted.mean(), 0.5, delta=0.01)
        with self.assertRaises(ParameterError):
            low_degree_projection(halfspace, 1, 100, RandomStream(seed=1), method="median")

    def test_l2_error_decreases_with_degree(self):
        ball = l2_ball(2, 1.2)
        errors = []
        for degree in (0, 2, 4):
            g = low_degree_projection(ball, degree, 50_000, RandomStream(seed=19), method="least_squares")
            errors.append(l2_error(g, ball, 50_000, RandomStream(seed=19)).value)
        self.assertLessEqual(errors[1], errors[0])
        self.assertLessEqual(errors[2], errors[1])

    def test_parseval_lower_bound(self):
        self.assertAlmostEqual(parseval_distance_lb([0.3, 0.1], [0.1, 0.1]), 0.04)
        noisy = [Estimate(value=0.3, stderr=0.05, n_samples=100, ci_level=0.95, ci_low=0.2, ci_high=0.4)]
        self.assertEqual(parseval_distance_lb(noisy, [0.1], conservative=True, k_sigma=4.0), 0.0)
        with self.assertRaises(ParameterError):
            parseval_distance_lb([0.1], [0.1, 0.2])


class TestTails(unittest.TestCase):

    def test_normalize_population(self):
        a = normalize_population([1.0, 2.0, 3.0, 6.0])
        self.assertAlmostEqual(a.sum(), 0.0)
        self.assertAlmostEqual(float(np.dot(a, a)), 4.0)
        with self.assertRaises(NormalizationError):
            normalize_population([2.0, 2.0, 2.0])
        with self.assertRaises(NormalizationError):
            normalize_population([1.0])

    def test_full_sample_sum_is_zero(self):
        profile = tail_ratio_without_replacement([1.0, -1.0, 2.0, -2.0], 4, [0.0, 1.0], 500,
                                                 RandomStream(seed=20))
        self.assertEqual(profile.scale, 0.0)
        self.assertEqual(profile.exceedance[0].value, 1.0)
        self.assertEqual(profile.exceedance[1].value, 0.0)

    def test_without_replacement_ratio_near_one(self):
        population = RandomStream(seed=21).normals(400)
        profile = tail_ratio_without_replacement(population, 100, [0.5], 40_000, RandomStream(seed=22))
        self.assertAlmostEqual(profile.scale, math.sqrt(100 * 0.75))
        self.assertGreater(profile.ratios[0], 0.8)
        self.assertLess(profile.ratios[0], 1.2)
        with self.assertRaises(ParameterError):
            tail_ratio_without_replacement(population, 401, [0.5], 10, RandomStream(seed=22))

    def test_iid_chi2_case_matches_exact(self):
        m, z = 20, 1.0
        profile = iid_tail_check(2.0, m, [z], 100_000, RandomStream(seed=23))
        exact = iid_tail_exact_chi2(m, z) * float(stats.norm.sf(z))
        self.assertTrue(profile.exceedance[0].agrees_with(exact, K_SIGMA))
        self.assertAlmostEqual(profile.scale, math.sqrt(2.0 * m))

    def test_iid_rejects_bad_power(self):
        with self.assertRaises(ParameterError):
            iid_tail_check(3.0, 10, [1.0], 100, RandomStream(seed=1))

    def test_berry_esseen(self):
        check = berry_esseen_check(1.0, 50, 20_000, RandomStream(seed=24))
        self.assertTrue(check.holds)
        self.assertGreater(check.third_moment, 0.0)


class TestBoundsAndGsa(unittest.TestCase):

    def test_gsa_values(self):
        self.assertAlmostEqual(gsa_ball_analytic(3, 1.0), float(stats.chi.pdf(1.0, 3)))
        self.assertAlmostEqual(nazarov_gsa_bound(16), math.sqrt(2.0 * math.log(16.0)) + 2.0)
        self.assertAlmostEqual(ball_gsa_bound(16), 2.0)
        self.assertAlmostEqual(isoperimetric_gsa_lower_bound(0.5), 1.0 / math.sqrt(2.0 * math.pi))
        self.assertEqual(isoperimetric_gsa_lower_bound(1.0), 0.0)
        with self.assertRaises(DomainError):
            isoperimetric_gsa_lower_bound(1.5)
        with self.assertRaises(ParameterError):
            nazarov_gsa_bound(1)

    def test_boppana_on_cube(self):
        check = boppana_check(cube(5, 1.0), 50_000, RandomStream(seed=25))
        self.assertEqual(check.facet_count, 10)
        self.assertAlmostEqual(check.bound, 7.0 * math.log(10.0))
        self.assertTrue(check.holds)

    def test_boppana_preconditions(self):
        with self.assertRaises(ParameterError):
            boppana_check(Polytope(2, [[1.0, 0.0], [0.0, 1.0]], [1.0, 1.0]), 100, RandomStream(seed=1))
        shifted = Polytope(1, [[1.0], [-1.0], [1.0]], [-1.0, 3.0, 2.0])
        with self.assertRaises(ParameterError):
            boppana_check(shifted, 100, RandomStream(seed=1))

    def test_attenuated_concentration(self):
        g = HermiteExpansion(1, {(0,): 1.0, (1,): 0.1})
        self.assertTrue(is_attenuated(g, math.sqrt(2.0), 0.05))
        check = attenuated_concentration_check(g, math.sqrt(2.0), 0.5, 50_000, RandomStream(seed=26))
        self.assertAlmostEqual(check.eps, 0.02 / 1.01)
        self.assertTrue(check.holds)

    def test_attenuation_needs_nonzero_mean(self):
        g = HermiteExpansion(1, {(1,): 1.0})
        with self.assertRaises(DomainError):
            attenuated_concentration_check(g, 2.0, 0.5, 100, RandomStream(seed=1))


if __name__ == '__main__':
    unittest.main()
