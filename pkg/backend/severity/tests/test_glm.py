import math

import numpy as np
from django.test import SimpleTestCase

from severity import errors
from severity.datamodel import Dataset, ModelSpec, encode_design
from severity.glm import bernoulli_loglik, fit_glm, predict_glm, score

from .utils import dataset, random_intercept_data


def intercept_design(positives, total):
    data = dataset({"R001": [1] * positives + [0] * (total - positives)})
    return encode_design(data, ModelSpec())


class FitGlmTest(SimpleTestCase):
    """Test cases for the IRLS logistic regression"""

    def test_intercept_only_closed_form(self):
        """Test that 5 positives out of 20 give the log-odds -1.0986"""
        fit = fit_glm(intercept_design(5, 20))
        self.assertTrue(fit.converged)
        self.assertAlmostEqual(fit.coefficients[0], math.log(5 / 15), delta=1e-6)
        self.assertAlmostEqual(fit.coefficients[0], -1.0986, delta=1e-4)
        self.assertAlmostEqual(fit.std_errors[0], 1 / math.sqrt(20 * 0.25 * 0.75), places=6)

    def test_balanced_deviance(self):
        """Test that 10 of 20 positives give deviance 40 ln 2 = 27.7259"""
        fit = fit_glm(intercept_design(10, 20))
        self.assertAlmostEqual(fit.deviance, 27.7259, delta=1e-4)
        self.assertAlmostEqual(fit.deviance, 40 * math.log(2), delta=1e-6)
        self.assertEqual(fit.n_params, 1)

    def test_score_vanishes_at_estimate(self):
        """Test that the gradient is zero at the fitted coefficients"""
        flags = [
            {"lighting_night": i % 2, "driver_under_30": int(i % 3 == 0)} for i in range(40)
        ]
        outcomes = [(int(i % 5 in (0, 3) or i % 7 == 0), f) for i, f in enumerate(flags)]
        data = dataset({"R001": outcomes})
        design = encode_design(data, ModelSpec.preset("glm", "light,age"))
        fit = fit_glm(design)
        self.assertLess(np.max(np.abs(score(design, fit.coefficients))), 1e-6)
        self.assertEqual(fit.column_names, ("intercept", "lighting_night", "driver_under_30"))
        self.assertTrue(np.all(fit.std_errors > 0))

    def test_score_matches_finite_differences(self):
        """Test the analytic gradient against central differences of the log-likelihood"""
        data = random_intercept_data(seed=4, groups=6, per_group=20)
        design = encode_design(data, ModelSpec.preset("glm", "light,age"))
        beta = np.array([-0.4, 0.3, -0.2])
        h = 1e-5
        numeric = np.array(
            [
                (
                    bernoulli_loglik(design.y, design.X @ (beta + h * e))
                    - bernoulli_loglik(design.y, design.X @ (beta - h * e))
                )
                / (2 * h)
                for e in np.eye(3)
            ]
        )
        np.testing.assert_allclose(score(design, beta), numeric, rtol=1e-5, atol=1e-7)

    def test_row_permutation_invariance(self):
        """Test that shuffling the crash records leaves the fit unchanged"""
        data = random_intercept_data(seed=9, groups=6, per_group=25)
        spec = ModelSpec.preset("glm", "light,pavement,age")
        fit = fit_glm(encode_design(data, spec))
        order = np.random.default_rng(2).permutation(data.n)
        shuffled = Dataset(records=[data.records[i] for i in order], roads=data.roads)
        other = fit_glm(encode_design(shuffled, spec))
        np.testing.assert_allclose(other.coefficients, fit.coefficients, rtol=0, atol=1e-10)
        np.testing.assert_allclose(other.std_errors, fit.std_errors, rtol=0, atol=1e-10)
        self.assertAlmostEqual(other.log_likelihood, fit.log_likelihood, delta=1e-10)

    def test_separation_detected(self):
        """Test that a perfectly separating covariate raises SeparationDetected"""
        rows = [(0, {"pavement_adverse": 0})] * 4 + [(1, {"pavement_adverse": 1})] * 4
        design = encode_design(dataset({"R001": rows}), ModelSpec.preset("glm", "pavement"))
        with self.assertRaises(errors.SeparationDetected):
            fit_glm(design)

    def test_duplicate_column_is_singular(self):
        """Test that two identical columns raise SingularInformation"""
        rows = [
            (i % 2, {"lighting_night": int(i % 3 == 0), "pavement_adverse": int(i % 3 == 0)})
            for i in range(12)
        ]
        design = encode_design(
            dataset({"R001": rows}), ModelSpec.preset("glm", "light,pavement")
        )
        with self.assertRaises(errors.SingularInformation):
            fit_glm(design)

    def test_invalid_tolerance(self):
        """Test that a non-positive tolerance is a configuration error"""
        with self.assertRaises(errors.InvalidConfig):
            fit_glm(intercept_design(5, 20), tolerance=0)


class PredictGlmTest(SimpleTestCase):
    """Test cases for GLM predictions"""

    def test_predictions_match_fitted_rate(self):
        """Test that the intercept-only model predicts the sample rate"""
        design = intercept_design(5, 20)
        p = predict_glm(fit_glm(design), design)
        np.testing.assert_allclose(p, 0.25, atol=1e-8)

    def test_column_mismatch(self):
        """Test that predicting on a different design raises DimensionMismatch"""
        fit = fit_glm(intercept_design(5, 20))
        rows = [(i % 2, {"driver_male": int(i % 3 == 0)}) for i in range(10)]
        other = encode_design(dataset({"R001": rows}), ModelSpec.preset("glm", "gender"))
        with self.assertRaises(errors.DimensionMismatch):
            predict_glm(fit, other)

    def test_loglik_is_stable_for_large_eta(self):
        """Test that extreme linear predictors do not overflow"""
        y = np.array([1.0, 0.0])
        eta = np.array([800.0, -800.0])
        self.assertAlmostEqual(bernoulli_loglik(y, eta), 0.0)
        self.assertTrue(math.isfinite(bernoulli_loglik(1 - y, eta)))
