import os
import sys
import math
import unittest

import numpy as np
from scipy import stats

# 將專案根目錄加入路徑以便導入模組
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from bodies import JuntaIntersection, l2_ball
from constructors import (TangentConfig, empirical_theta, fc_bound_bronstein, fc_bound_relative,
                          fc_bound_universal, intersection_volume_lower_bound, junta_term_volume_check,
                          junta_volume_bounds, nazarov_membership_probability, nazarov_w_scale,
                          sample_junta_intersection, sample_nazarov, solve_junta_params,
                          solve_nazarov_params, sphere_net, tangent_approximator, tune_nazarov_w)
from errors import (BudgetError, CapabilityError, DimensionError, ParameterError, SolverError,
                    UnsupportedDimensionError)
from gaussian_core import RandomStream


class TestNazarov(unittest.TestCase):

    def test_solver_residual_and_scale(self):
        for n, eps in ((16, 0.3), (256, 0.1), (4096, 0.03)):
            params = solve_nazarov_params(n, eps)
            self.assertLessEqual(params.residual, 1e-6)
            ratio = params.w / nazarov_w_scale(n, eps)
            self.assertTrue(0.2 <= ratio <= 5.0, f"n={n}, eps={eps}, ratio={ratio}")
            self.assertGreater(params.log_s, 0.0)
            self.assertAlmostEqual(params.d_in, math.sqrt(n) - eps / 4.0)

    def test_solver_independent_of_bracket(self):
        default = solve_nazarov_params(256, 0.1)
        lo, hi = default.bracket
        widened = solve_nazarov_params(256, 0.1, bracket=(lo / 2.0, 2.0 * hi))
        self.assertLessEqual(abs(default.w - widened.w), 1e-6)

    def test_solver_rejects_bad_inputs(self):
        with self.assertRaises(DimensionError):
            solve_nazarov_params(1, 0.1)
        with self.assertRaises(ParameterError):
            solve_nazarov_params(16, 0.6)

    def test_solver_reports_missing_sign_change(self):
        with self.assertRaises(SolverError) as ctx:
            solve_nazarov_params(16, 0.1, bracket=(4.0, 4.001))
        self.assertIn("gap_lo", ctx.exception.diagnostics)

    def test_membership_probability(self):
        self.assertEqual(nazarov_membership_probability(0.0, 1.0, 10), 1.0)
        self.assertAlmostEqual(nazarov_membership_probability(1.0, 1.5, 1), float(stats.norm.cdf(1.5)))
        self.assertAlmostEqual(nazarov_membership_probability(2.0, 2.0, 3), float(stats.norm.cdf(1.0)) ** 3)

    def test_sample_nazarov(self):
        polytope = sample_nazarov(5, 2.0, 30, RandomStream(seed=1))
        self.assertEqual(polytope.facet_count(), 30)
        self.assertTrue(polytope.contains_origin())
        np.testing.assert_array_equal(polytope.raw_thresholds, np.full(30, 2.0))

    def test_sample_nazarov_limits(self):
        with self.assertRaises(BudgetError):
            sample_nazarov(5, 2.0, 30, RandomStream(seed=1), budget=10)
        with self.assertRaises(ParameterError):
            sample_nazarov(5, 0.0, 30, RandomStream(seed=1))

    def test_membership_probability_matches_sampling(self):
        # 固定點 x 在多次抽樣中的成員比例
        x = np.array([1.0, 0.0, 0.0])
        hits = [sample_nazarov(3, 1.5, 4, RandomStream(seed=7, stream_id=i)).membership(x)
                for i in range(4000)]
        expected = nazarov_membership_probability(1.0, 1.5, 4)
        sigma = math.sqrt(expected * (1 - expected) / 4000)
        self.assertLess(abs(np.mean(hits) - expected), 4 * sigma)

    def test_tune_nazarov_w(self):
        target = l2_ball(4, 2.0)
        fit = tune_nazarov_w(target, 64, RandomStream(seed=2), n_samples=20_000, evaluations=15)
        self.assertEqual(fit.polytope.facet_count(), 64)
        self.assertGreater(fit.w, 0.0)
        self.assertLessEqual(fit.evaluations, 15)
        self.assertLess(fit.distance.value, 0.5)

    def test_tune_nazarov_w_stops_at_budget(self):
        target = l2_ball(4, 2.0)
        fit = tune_nazarov_w(target, 64, RandomStream(seed=2), n_samples=5_000, evaluations=3)
        self.assertEqual(fit.evaluations, 3)
        self.assertEqual(fit.polytope.raw_thresholds[0], fit.w)
        with self.assertRaises(ParameterError):
            tune_nazarov_w(target, 64, RandomStream(seed=2), n_samples=5_000, evaluations=0)


class TestJunta(unittest.TestCase):

    def test_l1_params_clamp_m(self):
        params = solve_junta_params(4096, 1.0, 0.3)
        self.assertEqual(params.mode, "l1")
        self.assertEqual(params.m, 2048)
        self.assertGreater(params.m_unclamped, params.m)
        self.assertAlmostEqual(params.omega_n, 32.0)
        self.assertTrue(any("截斷" in w for w in params.warnings))
        expected = (params.d_in * params.m / params.n
                    + math.sqrt(params.variance_constant) * params.t * params.omega_n)
        self.assertAlmostEqual(params.theta, expected)
        self.assertIsNotNone(params.M)

    def test_l1_worked_example(self):
        # (ln(1/0.3)/0.3)^{3/2}·256^{3/4} = 8.0398·64
        params = solve_junta_params(256, 1.0, 0.3)
        self.assertEqual(params.m_unclamped, 515)
        self.assertEqual(params.m, 128)

    def test_log_M_increases_with_m(self):
        pairs = [(params.m, params.log_M) for params in
                 (solve_junta_params(n, 1.0, 0.3) for n in (64, 256, 1024, 4096))]
        pairs += [(params.m, params.log_M) for params in
                  (solve_junta_params(4096, 1.0, 0.3, c_l1=c) for c in (0.01, 0.05, 0.2))]
        pairs.sort()
        for (m_a, log_a), (m_b, log_b) in zip(pairs, pairs[1:]):
            if m_b > m_a:
                self.assertGreater(log_b, log_a)

    def test_lp_mode(self):
        params = solve_junta_params(1024, 1.5, 0.4)
        self.assertEqual(params.mode, "lp")
        self.assertAlmostEqual(params.c1, 0.16 / math.log(2.5))

    def test_params_reject_bad_inputs(self):
        with self.assertRaises(ParameterError):
            solve_junta_params(100, 2.0, 0.3)
        with self.assertRaises(ParameterError):
            solve_junta_params(100, 1.0, 1.0)

    def test_sample_junta_intersection(self):
        junta = sample_junta_intersection(20, 1.0, 7, 5, 3.0, RandomStream(seed=3))
        self.assertIsInstance(junta, JuntaIntersection)
        self.assertEqual(junta.indices.shape, (7, 5))
        for row in junta.indices:
            self.assertEqual(len(set(row.tolist())), 5)
        with self.assertRaises(ParameterError):
            sample_junta_intersection(4, 1.0, 2, 5, 1.0, RandomStream(seed=3))

    def test_index_marginal_is_uniform(self):
        junta = sample_junta_intersection(10, 1.0, 10_000, 3, 1.0, RandomStream(seed=12))
        frequency = np.bincount(junta.indices.ravel(), minlength=10) / 10_000
        sigma = math.sqrt(0.3 * 0.7 / 10_000)
        np.testing.assert_array_less(np.abs(frequency - 0.3), 3 * sigma)

    def test_empirical_theta_matches_chi2_quantile(self):
        theta = empirical_theta(10, 2.0, 5, 0.9, 100_000, RandomStream(seed=4))
        self.assertAlmostEqual(theta, float(stats.chi2.ppf(0.9, 5)), delta=0.15)
        with self.assertRaises(ParameterError):
            empirical_theta(10, 2.0, 5, 0.9, 999, RandomStream(seed=4))

    def test_volume_bounds(self):
        lower, upper = junta_volume_bounds(100.0)
        self.assertAlmostEqual(lower, 1.0 - math.log(100.0) / 100.0)
        self.assertAlmostEqual(upper, 1.0 - 1.0 / 300.0)
        with self.assertRaises(ParameterError):
            junta_volume_bounds(2.0)

    def test_intersection_lower_bound(self):
        self.assertAlmostEqual(intersection_volume_lower_bound([0.9, 0.9]), 0.8)
        self.assertEqual(intersection_volume_lower_bound([0.2, 0.2]), 0.0)

    def test_term_volume_check_holds_at_exact_quantile(self):
        M = 100
        theta = float(stats.chi2.ppf(1.0 - 1.0 / (2 * M), 10))
        check = junta_term_volume_check(10, 2.0, theta, M, 50_000, RandomStream(seed=5))
        self.assertTrue(check.bounds_hold)
        self.assertTrue(check.volume.agrees_with(1.0 - 1.0 / (2 * M), 4.0))


class TestTangent(unittest.TestCase):

    def test_config_modes(self):
        practical = TangentConfig.practical(0.2, 0.1, math.pi / 16)
        self.assertAlmostEqual(practical.tau, 0.0025)
        self.assertEqual(practical.k_star, math.ceil(math.log(200.0) / 0.0025))
        theoretical = TangentConfig.theoretical(2, 0.2, 0.1)
        self.assertEqual(theoretical.parameter_mode, "theoretical")
        self.assertLess(theoretical.theta_star, practical.theta_star)
        with self.assertRaises(ParameterError):
            TangentConfig.practical(0.2, 0.6, 0.1)

    def test_sphere_net_covers_circle(self):
        angle = math.pi / 8
        net = sphere_net(2, angle)
        probes = RandomStream(seed=6).normals((2000, 2))
        probes /= np.linalg.norm(probes, axis=1)[:, None]
        worst = np.arccos(np.clip((probes @ net.T).max(axis=1), -1.0, 1.0)).max()
        self.assertLessEqual(worst, angle)

    def test_sphere_net_covers_sphere(self):
        angle = 0.6
        net = sphere_net(3, angle)
        probes = RandomStream(seed=7).normals((5000, 3))
        probes /= np.linalg.norm(probes, axis=1)[:, None]
        worst = np.arccos(np.clip((probes @ net.T).max(axis=1), -1.0, 1.0)).max()
        self.assertLessEqual(worst, angle)

    def test_sphere_net_modes(self):
        with self.assertRaises(UnsupportedDimensionError):
            sphere_net(4, 0.3)
        with self.assertRaises(ParameterError):
            sphere_net(4, 0.3, "random_directions")
        directions = sphere_net(4, 0.3, "random_directions", budget=50, stream=RandomStream(seed=8))
        self.assertEqual(directions.shape, (50, 4))
        np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0)

    def test_tangent_contains_body(self):
        disk = l2_ball(2, math.sqrt(-2.0 * math.log(0.1)))
        polytope = tangent_approximator(disk, TangentConfig.practical(0.2, 0.1, math.pi / 16))
        self.assertGreater(polytope.facet_count(), 3)
        self.assertLessEqual(polytope.facet_count(), 200)
        X = RandomStream(seed=9).normals((20_000, 2))
        inside = disk.contains(X)
        self.assertTrue(np.all(polytope.contains(X[inside])))

    def test_tangent_requires_support(self):
        junta = JuntaIntersection(2, 1.0, [[0, 1]], [1.0])
        with self.assertRaises(CapabilityError):
            tangent_approximator(junta, TangentConfig.practical(0.2, 0.1, 0.2))


class TestFacetBounds(unittest.TestCase):

    def test_universal(self):
        value = fc_bound_universal(16, 0.1)
        scale = 16 ** 1.25 + 2 * 16 ** 0.75 * math.sqrt(math.log(20.0))
        self.assertAlmostEqual(value, 7.5 * math.log(scale / 0.1))
        self.assertGreater(fc_bound_universal(32, 0.1), value)

    def test_relative(self):
        self.assertGreater(fc_bound_relative(10, 0.1, 0.01), fc_bound_relative(10, 0.1, 0.1))
        with self.assertRaises(ParameterError):
            fc_bound_relative(10, 0.1, 1.0)

    def test_bronstein(self):
        self.assertAlmostEqual(fc_bound_bronstein(1, 1e-4), math.log(3.0))
        with self.assertRaises(ParameterError):
            fc_bound_bronstein(10, 0.01)


if __name__ == '__main__':
    unittest.main()
