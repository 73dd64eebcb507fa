import os
import sys
import math
import unittest
from unittest.mock import patch

import numpy as np
from scipy import stats

# 將專案根目錄加入路徑以便導入模組
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from bodies import FullSpace, Halfspace, JuntaIntersection, LpBall, Polytope
from errors import ParameterError, SpecParseError
from experiments import (ExperimentConfig, body_from_text, build_body, hermite_orthonormality_grid,
                         identity_suite, inequality_grid, parse_body_spec, parse_vector,
                         run_experiment)
from gaussian_core import RandomStream
from results_store import get_all_records

TEST_RESULTS_PATH = "test_experiments.jsonl"


class TestBodySpec(unittest.TestCase):

    def test_parse_keeps_order(self):
        spec = parse_body_spec("lpball:n=5,p=1.5,budget=auto")
        self.assertEqual(spec.kind, "lpball")
        self.assertEqual(list(spec.params), ["n", "p", "budget"])
        self.assertEqual(spec.render(), "lpball:n=5,p=1.5,budget=auto")

    def test_unknown_kind(self):
        with self.assertRaises(SpecParseError) as ctx:
            parse_body_spec("sphere:n=3")
        self.assertEqual(ctx.exception.position, 0)

    def test_unexpected_key_position(self):
        with self.assertRaises(SpecParseError) as ctx:
            parse_body_spec("l2ball:n=3,q=1")
        self.assertEqual(ctx.exception.position, len("l2ball:n=3,"))

    def test_missing_and_repeated_keys(self):
        with self.assertRaises(SpecParseError):
            parse_body_spec("l2ball:n=3")
        with self.assertRaises(SpecParseError):
            parse_body_spec("l2ball:n=3,n=4,r=1")
        with self.assertRaises(SpecParseError):
            parse_body_spec("l2ball n=3")

    def test_bad_number_points_at_value(self):
        spec = parse_body_spec("l2ball:n=3,r=abc")
        with self.assertRaises(SpecParseError) as ctx:
            build_body(spec)
        self.assertEqual(ctx.exception.position, len("l2ball:n=3,r="))

    def test_parse_vector(self):
        np.testing.assert_array_equal(parse_vector("e2", 3), [0.0, 1.0, 0.0])
        np.testing.assert_array_equal(parse_vector("1;-2", 2), [1.0, -2.0])
        with self.assertRaises(SpecParseError):
            parse_vector("e4", 3)
        with self.assertRaises(SpecParseError):
            parse_vector("1;2", 3)

    def test_spec_errors_are_parameter_errors(self):
        with self.assertRaises(ParameterError):
            body_from_text("full:")


class TestBuildBody(unittest.TestCase):

    def test_auto_radius(self):
        ball = body_from_text("l2ball:n=9,r=auto")
        self.assertAlmostEqual(ball.radius, 3.0)

    def test_kinds(self):
        self.assertIsInstance(body_from_text("full:n=2"), FullSpace)
        self.assertIsInstance(body_from_text("halfspace:n=3,v=e1,theta=0.5"), Halfspace)
        slab = body_from_text("slab:n=2,v=1;0,theta=1")
        self.assertIsInstance(slab, Polytope)
        self.assertEqual(slab.facet_count(), 2)
        self.assertIsInstance(body_from_text("lpball:n=4,p=1,budget=auto"), LpBall)

    def test_random_kinds_are_seeded(self):
        first = body_from_text("nazarov:n=3,w=2,s=10,seed=5")
        second = body_from_text("nazarov:n=3,w=2,s=10,seed=5")
        np.testing.assert_array_equal(first.normals, second.normals)
        junta = body_from_text("junta:n=10,p=1,M=4,m=3,theta=2,seed=1")
        self.assertIsInstance(junta, JuntaIntersection)

    def test_seed_range(self):
        with self.assertRaises(SpecParseError):
            body_from_text("nazarov:n=3,w=2,s=10,seed=-1")


class TestExperimentConfig(unittest.TestCase):

    def test_extra_fields_forbidden(self):
        with self.assertRaises(Exception):
            ExperimentConfig.model_validate({"command": "volume", "seed": 1, "colour": "red"})

    def test_options_validated_per_command(self):
        cfg = ExperimentConfig(command="gns", seed=1, options={"body": "full:n=2", "rho": 0.7})
        with self.assertRaises(ParameterError):
            cfg.resolved_options()
        cfg = ExperimentConfig(command="volume", seed=1, options={"body": "full:n=2", "rho": 0.1})
        with self.assertRaises(ParameterError):
            cfg.resolved_options()


class TestAnalyticGrids(unittest.TestCase):

    def test_inequality_grid_holds(self):
        checks = inequality_grid()
        self.assertGreater(len(checks), 30)
        failed = [c for c in checks if not c["holds"]]
        self.assertEqual(failed, [])

    def test_hermite_orthonormality(self):
        result = hermite_orthonormality_grid(8)
        self.assertTrue(result["holds"])


class TestRunExperiment(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        # 覆蓋結果檔路徑為測試檔
        cls.patcher = patch('results_store.RESULTS_PATH', TEST_RESULTS_PATH)
        cls.patcher.start()

    @classmethod
    def tearDownClass(cls):
        cls.patcher.stop()
        if os.path.exists(TEST_RESULTS_PATH):
            os.remove(TEST_RESULTS_PATH)

    def setUp(self):
        if os.path.exists(TEST_RESULTS_PATH):
            os.remove(TEST_RESULTS_PATH)

    def test_volume_record(self):
        cfg = ExperimentConfig(command="volume", seed=3, samples=50_000,
                               options={"body": "l2ball:n=4,r=2"})
        records = run_experiment(cfg)
        self.assertEqual(len(records), 1)
        volume = records[0].estimates["volume"]
        self.assertAlmostEqual(volume["value"], float(stats.chi2.cdf(4.0, 4)), delta=0.01)
        self.assertEqual(records[0].params["body"], "l2ball:n=4,r=2")
        stored = get_all_records()
        self.assertEqual(len(stored), 1)
        self.assertEqual(stored[0]["seed"], 3)
        self.assertEqual(stored[0]["estimates"], records[0].estimates)

    def test_same_seed_same_record(self):
        cfg = ExperimentConfig(command="gns", seed=11, samples=20_000,
                               options={"body": "halfspace:n=2,v=e1,theta=0", "rho": 0.1})
        first = run_experiment(cfg, persist=False)[0]
        again = run_experiment(cfg.model_copy(update={"threads": 3}), persist=False)[0]
        self.assertEqual(first.estimates, again.estimates)
        self.assertEqual(first.params, again.params)

    def test_no_persist(self):
        cfg = ExperimentConfig(command="bounds", seed=0, samples=1,
                               options={"kind": "bronstein", "n": 2, "eps": 0.001})
        records = run_experiment(cfg, persist=False)
        self.assertAlmostEqual(records[0].estimates["log2_facets"],
                               records[0].estimates["log_facets"] / math.log(2.0))
        self.assertEqual(get_all_records(), [])

    def test_build_l1_polytope(self):
        cfg = ExperimentConfig(command="build", seed=1, samples=1,
                               options={"kind": "l1-polytope", "n": 6, "indices": [0, 1, 2], "theta": 1.0})
        records = run_experiment(cfg, persist=False)
        self.assertEqual(records[0].estimates["facets"], 8)

    def test_build_requires_parameters(self):
        cfg = ExperimentConfig(command="build", seed=1, samples=1, options={"kind": "nazarov"})
        with self.assertRaises(ParameterError):
            run_experiment(cfg, persist=False)

    def test_verify_tails(self):
        cfg = ExperimentConfig(command="verify", seed=1, samples=1, options={"kind": "tails"})
        record = run_experiment(cfg, persist=False)[0]
        self.assertTrue(record.estimates["all_hold"])

    def test_hermite_project(self):
        cfg = ExperimentConfig(command="hermite-project", seed=2, samples=20_000,
                               options={"body": "halfspace:n=2,v=e1,theta=0", "degree": 1})
        record = run_experiment(cfg, persist=False)[0]
        self.assertIn("0,0", record.estimates["expansion"]["coeffs"])
        self.assertEqual(len(record.estimates["coefficients"]), 3)

    def test_zoom_collapse_needs_polytope(self):
        cfg = ExperimentConfig(command="zoom-collapse", seed=2, samples=1,
                               options={"body": "l2ball:n=2,r=1"})
        with self.assertRaises(ParameterError):
            run_experiment(cfg, persist=False)


class TestIdentitySuite(unittest.TestCase):

    def test_identities_agree(self):
        results = identity_suite(100_000, RandomStream(seed=42), anchors=200, inner=200, k_sigma=4.0)
        self.assertGreaterEqual(len(results), 5)
        for name, result in results.items():
            self.assertTrue(result["agrees"], name)


if __name__ == '__main__':
    unittest.main()
