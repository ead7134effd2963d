import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from severity import errors
from severity.datamodel import ModelSpec, encode_design
from severity.glm import fit_glm
from severity.mixed import fit_null
from severity.reporting import coefficient_table, load_fit, model_summary, write_fit

from .utils import random_intercept_data


class CoefficientTableTest(SimpleTestCase):
    """Test cases for Wald coefficient rows"""

    def test_significance_marks(self):
        """Test z, p-values and the 0.05 star"""
        rows = coefficient_table(["intercept", "age"], [1.96 * 0.2, 0.1], [0.2, 0.2])
        self.assertEqual(rows[0]["z"], 1.96)
        self.assertAlmostEqual(rows[0]["p_value"], 0.05, delta=1e-4)
        self.assertEqual(rows[1]["significance"], "")
        self.assertAlmostEqual(rows[1]["p_value"], 0.617075, delta=1e-5)

    def test_strong_effect_is_starred(self):
        """Test that a large z is marked significant"""
        rows = coefficient_table(["light"], [0.5], [0.1])
        self.assertEqual(rows[0]["significance"], "*")

    def test_zero_standard_error(self):
        """Test that a zero standard error leaves z and p undefined"""
        rows = coefficient_table(["intercept"], [0.3], [0.0])
        self.assertIsNone(rows[0]["z"])
        self.assertIsNone(rows[0]["p_value"])
        self.assertEqual(rows[0]["significance"], "")


class FitDocumentTest(SimpleTestCase):
    """Test cases for writing and reloading fit documents"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.data = random_intercept_data(seed=31, groups=8, per_group=25)
        cls.glm = fit_glm(encode_design(cls.data, ModelSpec()))
        cls.mixed = fit_null(cls.data)

    def setUp(self):
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.dir = Path(tmp.name)

    def test_glm_round_trip(self):
        """Test that a reloaded GLM fit has the same estimates"""
        path = write_fit(self.dir, "glm", self.glm)
        loaded = load_fit(path)
        np.testing.assert_array_equal(loaded.coefficients, self.glm.coefficients)
        np.testing.assert_array_equal(loaded.covariance, self.glm.covariance)
        self.assertEqual(loaded.spec, self.glm.spec)

    def test_mixed_round_trip(self):
        """Test that a reloaded mixed fit has the same estimates and modes"""
        path = write_fit(self.dir, "null", self.mixed)
        self.assertEqual(Path(path).name, "fit_null.json")
        loaded = load_fit(path)
        np.testing.assert_array_equal(loaded.fixed, self.mixed.fixed)
        np.testing.assert_array_equal(loaded.cov.theta, self.mixed.cov.theta)
        np.testing.assert_array_equal(loaded.conditional_modes, self.mixed.conditional_modes)
        self.assertEqual(loaded.group_keys, self.mixed.group_keys)
        self.assertEqual(loaded.deviance, self.mixed.deviance)

    def test_mixed_document_fields(self):
        """Test the summary blocks of a mixed fit document"""
        document = json.loads(write_fit(self.dir, "null", self.mixed).read_text())
        self.assertEqual(document["model"], "null")
        self.assertEqual(document["kind"], "mixed")
        random = document["random_effects"]
        self.assertEqual(random["components"][0]["term"], "intercept")
        self.assertGreaterEqual(random["icc"], 0.0)
        self.assertEqual(set(document["conditional_modes"]), set(self.data.road_ids))
        self.assertEqual(document["fit"]["n_groups"], 8)

    def test_glm_summary_has_no_random_block(self):
        """Test that single-level summaries carry no variance components"""
        summary = model_summary(self.glm)
        self.assertIsNone(summary["random_effects"])
        self.assertEqual(summary["fit"]["n_params"], 1)

    def test_missing_document(self):
        """Test that loading a missing file names the path"""
        with self.assertRaises(errors.DataFileNotFound):
            load_fit(self.dir / "fit_none.json")

    def test_malformed_document(self):
        """Test that a JSON file without a state block is rejected"""
        path = self.dir / "fit_bad.json"
        path.write_text('{"model": "glm"}')
        with self.assertRaises(errors.InvalidConfig):
            load_fit(path)
