import os
import sys
import math
import unittest
from unittest.mock import patch

import numpy as np

# 將專案根目錄加入路徑以便導入模組
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from bodies import (DilatedBody, FullSpace, Halfspace, IntersectionBody, JuntaIntersection, LpBall,
                    Polytope, canonical_bp, cube, dilate, intersect, l1_junta_to_polytope, l2_ball,
                    load_polytope, membership, save_polytope, support_lp, symmetric_slab, zoom_body)
from errors import CapabilityError, CapError, DimensionError, ParameterError
from gaussian_core import RandomStream

TEST_POLYTOPE = "test_polytope.json"


class TestMembership(unittest.TestCase):

    def test_ball_boundary_is_inside(self):
        ball = l2_ball(3, 2.0)
        self.assertTrue(membership(ball, [2.0, 0.0, 0.0]))
        self.assertFalse(membership(ball, [2.0, 0.1, 0.0]))

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionError):
            membership(l2_ball(3, 1.0), [0.0, 0.0])

    def test_halfspace_normalizes(self):
        h = Halfspace([0.0, 2.0], 2.0)
        np.testing.assert_allclose(h.normal, [0.0, 1.0])
        self.assertAlmostEqual(h.threshold, 1.0)
        self.assertTrue(h.membership([5.0, 1.0]))
        self.assertFalse(h.membership([0.0, 1.0001]))

    def test_zero_normal_rejected(self):
        with self.assertRaises(ParameterError):
            Halfspace([0.0, 0.0], 1.0)
        with self.assertRaises(ParameterError):
            Polytope(2, [[0.0, 0.0]], [1.0])

    def test_polytope_with_no_facets_is_everything(self):
        empty = Polytope(3, [], [])
        self.assertEqual(empty.facet_count(), 0)
        self.assertTrue(empty.membership([100.0, -100.0, 5.0]))

    def test_cube_contains(self):
        box = cube(2, 1.0)
        self.assertEqual(box.facet_count(), 4)
        result = box.contains([[0.5, -0.5], [1.0, 1.0], [1.5, 0.0]])
        self.assertEqual(result.tolist(), [True, True, False])

    def test_batch_matches_single_point(self):
        stream = RandomStream(seed=3)
        normals = stream.normals((600, 4))
        polytope = Polytope(4, normals, np.full(600, 2.5))
        X = stream.normals((200, 4))
        batch = polytope.contains(X)
        single = [polytope.membership(x) for x in X]
        self.assertEqual(batch.tolist(), single)

    def test_facet_order_does_not_matter(self):
        stream = RandomStream(seed=4)
        polytope = Polytope(3, stream.normals((40, 3)), np.full(40, 1.5))
        shuffled = polytope.permuted(list(range(39, -1, -1)))
        X = stream.normals((500, 3))
        np.testing.assert_array_equal(polytope.contains(X), shuffled.contains(X))

    def test_lp_ball_infinity(self):
        box = LpBall(2, math.inf, 1.0)
        self.assertTrue(box.membership([1.0, -1.0]))
        self.assertFalse(box.membership([1.01, 0.0]))

    def test_full_space(self):
        self.assertTrue(FullSpace(2).membership([1e9, -1e9]))


class TestSupport(unittest.TestCase):

    def test_l2_support(self):
        self.assertAlmostEqual(support_lp(l2_ball(3, 2.0), [0.0, 3.0, 4.0]), 2.0)

    def test_l1_support_is_max_coordinate(self):
        ball = LpBall(3, 1.0, 3.0)
        self.assertAlmostEqual(ball.support([1.0, 0.0, 0.0]), 3.0)
        self.assertAlmostEqual(ball.support([1.0, 1.0, 0.0]), 3.0 / math.sqrt(2.0))

    def test_support_many_matches_single(self):
        ball = LpBall(3, 1.5, 2.0)
        directions = RandomStream(seed=6).normals((5, 3))
        expected = [ball.support(v) for v in directions]
        np.testing.assert_allclose(ball.support_many(directions), expected)

    def test_support_zero_direction(self):
        with self.assertRaises(ParameterError):
            l2_ball(2, 1.0).support([0.0, 0.0])

    def test_polytope_support_by_lp(self):
        self.assertAlmostEqual(cube(2, 1.0).support([1.0, 1.0]), math.sqrt(2.0), places=6)
        self.assertTrue(math.isinf(Halfspace([1.0, 0.0], 1.0).as_polytope().support([0.0, 1.0])))

    def test_halfspace_support(self):
        h = Halfspace([1.0, 0.0], 2.0)
        self.assertAlmostEqual(h.support([3.0, 0.0]), 2.0)
        self.assertTrue(math.isinf(h.support([0.0, 1.0])))

    def test_junta_has_no_support(self):
        junta = JuntaIntersection(4, 1.0, [[0, 1]], [1.0])
        with self.assertRaises(CapabilityError):
            junta.support([1.0, 0.0, 0.0, 0.0])

    def test_dilated_support(self):
        self.assertAlmostEqual(dilate(l2_ball(2, 1.0), 3.0).support([1.0, 0.0]), 3.0)


class TestConstructions(unittest.TestCase):

    def test_canonical_bp_budget(self):
        ball = canonical_bp(10, 1.0)
        self.assertAlmostEqual(ball.p_power_budget, 10 * math.sqrt(2.0 / math.pi))
        self.assertAlmostEqual(canonical_bp(10, 2.0).p_power_budget, 10.0)

    def test_dilate(self):
        big = dilate(l2_ball(2, 1.0), 2.0)
        self.assertIsInstance(big, DilatedBody)
        self.assertTrue(big.membership([1.9, 0.0]))
        with self.assertRaises(ParameterError):
            dilate(l2_ball(2, 1.0), 0.0)

    def test_zoom_identity_and_constant(self):
        ball = l2_ball(2, 1.0)
        whole = zoom_body(ball, 1.0, [5.0, 5.0])
        self.assertTrue(whole.membership([0.5, 0.0]))
        frozen = zoom_body(ball, 0.0, [5.0, 5.0])
        self.assertFalse(frozen.membership([0.0, 0.0]))
        with self.assertRaises(ParameterError):
            zoom_body(ball, 1.5, [0.0, 0.0])

    def test_l1_junta_matches_junta_membership(self):
        polytope = l1_junta_to_polytope(5, [0, 2, 4], 2.0)
        self.assertEqual(polytope.facet_count(), 8)
        junta = JuntaIntersection(5, 1.0, [[0, 2, 4]], [2.0])
        X = RandomStream(seed=8).normals((1000, 5))
        np.testing.assert_array_equal(polytope.contains(X), junta.contains(X))

    @patch('config.JUNTA_CAP', 3)
    def test_l1_junta_cap(self):
        with self.assertRaises(CapError):
            l1_junta_to_polytope(6, [0, 1, 2, 3], 1.0)

    def test_junta_virtual_facets(self):
        junta = JuntaIntersection(10, 1.0, [[0, 1, 2], [3, 4, 5]], [1.0, 2.0])
        self.assertEqual(junta.virtual_facet_count(), 16)
        self.assertIsNone(JuntaIntersection(10, 1.5, [[0, 1]], [1.0]).virtual_facet_count())

    def test_junta_rejects_repeated_index(self):
        with self.assertRaises(ParameterError):
            JuntaIntersection(5, 1.0, [[1, 1]], [1.0])

    def test_intersect_polytopes_concatenates(self):
        both = intersect([cube(2, 1.0), symmetric_slab([1.0, 1.0], 0.5)])
        self.assertIsInstance(both, Polytope)
        self.assertEqual(both.facet_count(), 6)
        self.assertFalse(both.membership([0.9, 0.9]))

    def test_intersect_mixed_bodies(self):
        both = intersect([l2_ball(2, 1.0), cube(2, 0.5)])
        self.assertIsInstance(both, IntersectionBody)
        self.assertTrue(both.membership([0.4, 0.4]))
        self.assertFalse(both.membership([0.6, 0.0]))
        with self.assertRaises(DimensionError):
            intersect([l2_ball(2, 1.0), l2_ball(3, 1.0)])

    def test_contains_origin(self):
        self.assertTrue(cube(3, 1.0).contains_origin())
        self.assertFalse(Polytope(1, [[1.0]], [-1.0]).contains_origin())


class TestPolytopeFile(unittest.TestCase):

    def tearDown(self):
        if os.path.exists(TEST_POLYTOPE):
            os.remove(TEST_POLYTOPE)

    def test_save_load_keeps_raw_values(self):
        original = Polytope(2, [[3.0, 4.0], [0.1, -0.7]], [5.0, 0.3])
        save_polytope(original, TEST_POLYTOPE)
        loaded = load_polytope(TEST_POLYTOPE)
        np.testing.assert_array_equal(loaded.raw_normals, original.raw_normals)
        np.testing.assert_array_equal(loaded.raw_thresholds, original.raw_thresholds)

    def test_load_dimension_mismatch(self):
        with open(TEST_POLYTOPE, "w", encoding="utf-8") as f:
            f.write('{"dim": 3, "halfspaces": [{"v": [1, 0], "theta": 1}]}')
        with self.assertRaises(DimensionError):
            load_polytope(TEST_POLYTOPE)

    def test_load_missing_file(self):
        with self.assertRaises(ParameterError):
            load_polytope("no_such_polytope.json")


if __name__ == '__main__':
    unittest.main()
