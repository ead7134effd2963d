import math

import numpy as np
from django.test import SimpleTestCase
from scipy import optimize, special

from severity import errors
from severity.conf import MixedSettings
from severity.datamodel import Dataset, ModelSpec, encode_design
from severity.glm import GlmFit, bernoulli_loglik, fit_glm
from severity.mixed import (
    LEVEL1_VARIANCE,
    CovarianceParams,
    conditional_modes,
    fit_mixed,
    fit_null,
    icc,
    information_criteria,
    laplace_loglik,
    lbfgs_converged,
    predict_mixed,
)
from severity.simgen import GeneratorConfig, generate

from .utils import crash, dataset, random_intercept_data, road

INTERCEPT_ONLY = ("intercept",)


def covariance(*diagonal):
    names = INTERCEPT_ONLY + tuple(f"slope{k}" for k in range(1, len(diagonal)))
    return CovarianceParams(theta=np.diag(diagonal), names=names)


class IccTest(SimpleTestCase):
    """Test cases for the intra-class correlation"""

    def test_moderate_variance(self):
        """Test that a between-road variance of 0.8375 gives an ICC of 0.2029"""
        self.assertAlmostEqual(icc(0.8375), 0.2029, delta=5e-4)
        self.assertAlmostEqual(LEVEL1_VARIANCE, math.pi**2 / 3)

    def test_zero_variance(self):
        """Test that no between-road variance gives an ICC of zero"""
        self.assertEqual(icc(0.0), 0.0)

    def test_equal_variances(self):
        """Test that a road variance of pi^2/3 splits the latent variance evenly"""
        self.assertAlmostEqual(icc(math.pi**2 / 3), 0.5, delta=1e-12)

    def test_strictly_increasing(self):
        """Test that a larger road variance always gives a larger ICC"""
        values = [icc(v) for v in np.linspace(0.0, 20.0, 101)]
        self.assertTrue(np.all(np.diff(values) > 0))
        self.assertLess(values[-1], 1.0)

    def test_negative_variance(self):
        """Test that a negative variance is rejected"""
        with self.assertRaises(errors.NegativeVariance):
            icc(-0.1)


class InformationCriteriaTest(SimpleTestCase):
    """Test cases for AIC and BIC"""

    def test_criteria_arithmetic(self):
        """Test deviance 100, three parameters and n = 100"""
        fit = GlmFit(
            spec=ModelSpec.preset("glm", "age,light"),
            column_names=("intercept", "driver_under_30", "lighting_night"),
            coefficients=np.zeros(3),
            std_errors=np.ones(3),
            covariance=np.eye(3),
            log_likelihood=-50.0,
            n_obs=100,
            converged=True,
            iterations=3,
        )
        aic, bic = information_criteria(fit)
        self.assertAlmostEqual(aic, 106.0)
        self.assertAlmostEqual(bic, 113.816, delta=1e-3)


class CovarianceParamsTest(SimpleTestCase):
    """Test cases for the covariance factor parameterization"""

    def test_upper_triangle_rejected(self):
        """Test that a non-lower-triangular factor is invalid"""
        with self.assertRaises(errors.InvalidConfig):
            CovarianceParams(theta=[[1.0, 0.5], [0.0, 1.0]], names=("intercept", "age"))

    def test_negative_diagonal_rejected(self):
        """Test that a negative diagonal entry is invalid"""
        with self.assertRaises(errors.InvalidConfig):
            covariance(-0.1)

    def test_shape_mismatch(self):
        """Test that the factor must match the number of names"""
        with self.assertRaises(errors.DimensionMismatch):
            CovarianceParams(theta=np.eye(2), names=INTERCEPT_ONLY)

    def test_variances_and_correlations(self):
        """Test Sigma = L L' and the implied correlation"""
        cov = CovarianceParams(theta=[[2.0, 0.0], [1.0, 1.0]], names=("intercept", "age"))
        np.testing.assert_allclose(cov.sigma, [[4.0, 2.0], [2.0, 2.0]])
        np.testing.assert_allclose(cov.variances, [4.0, 2.0])
        self.assertAlmostEqual(cov.correlations[0, 1], 2.0 / math.sqrt(8.0))
        self.assertEqual(cov.boundary, ())

    def test_vector_round_trip(self):
        """Test the free-parameter vector for both structures"""
        cov = CovarianceParams(theta=[[2.0, 0.0], [1.0, 0.5]], names=("intercept", "age"))
        full = CovarianceParams.from_vector(cov.to_vector("full"), cov.names, "full")
        np.testing.assert_array_equal(full.theta, cov.theta)
        diagonal = CovarianceParams.from_vector([2.0, 0.5], cov.names, "diagonal")
        np.testing.assert_array_equal(diagonal.theta, np.diag([2.0, 0.5]))
        self.assertEqual(CovarianceParams.free_count(2, "full"), 3)
        self.assertEqual(CovarianceParams.free_count(2, "diagonal"), 2)

    def test_boundary_names(self):
        """Test that zero variances are reported as boundary components"""
        self.assertEqual(covariance(0.0).boundary, INTERCEPT_ONLY)


class OptimizerStatusTest(SimpleTestCase):
    """Test cases for reading the L-BFGS-B termination status"""

    LOWER = np.array([-np.inf, 0.0])

    def result(self, status, jac, x=(0.3, 0.5), fun=200.0):
        return optimize.OptimizeResult(
            status=status, jac=np.array(jac), x=np.array(x), fun=fun
        )

    def test_plain_statuses(self):
        """Test that status 0 converges and status 1 does not"""
        self.assertTrue(lbfgs_converged(self.result(0, [1.0, 1.0]), self.LOWER, 1e-6))
        self.assertFalse(lbfgs_converged(self.result(1, [0.0, 0.0]), self.LOWER, 1e-6))

    def test_line_search_failure_at_flat_point(self):
        """Test that a failed line search with a vanishing gradient counts as converged"""
        result = self.result(2, [1e-5, -2e-5])
        self.assertTrue(lbfgs_converged(result, self.LOWER, 1e-6))

    def test_line_search_failure_with_large_gradient(self):
        """Test that a failed line search away from a stationary point does not converge"""
        result = self.result(2, [0.5, 0.0])
        self.assertFalse(lbfgs_converged(result, self.LOWER, 1e-6))

    def test_gradient_pushing_into_bound_is_ignored(self):
        """Test that a variance pinned at zero may keep a positive gradient"""
        result = self.result(2, [0.0, 3.0], x=(0.3, 0.0))
        self.assertTrue(lbfgs_converged(result, self.LOWER, 1e-6))


class LaplaceTest(SimpleTestCase):
    """Test cases for the Laplace-approximate log-likelihood"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.data = random_intercept_data(seed=11)
        cls.design = encode_design(cls.data, ModelSpec.preset("null"))

    def test_zero_variance_is_glm_loglik(self):
        """Test that theta = 0 reproduces the single-level log-likelihood"""
        beta = np.array([-0.5])
        expected = bernoulli_loglik(self.design.y, self.design.X @ beta)
        self.assertAlmostEqual(
            laplace_loglik(self.design, beta, covariance(0.0)), expected, places=8
        )

    def test_group_relabeling_invariance(self):
        """Test that reordering the road table leaves the log-likelihood unchanged"""
        reordered = Dataset(
            records=self.data.records,
            roads={key: self.data.roads[key] for key in reversed(self.data.road_ids)},
        )
        other = encode_design(reordered, ModelSpec.preset("null"))
        beta, cov = np.array([-0.6]), covariance(0.9)
        self.assertAlmostEqual(
            laplace_loglik(self.design, beta, cov),
            laplace_loglik(other, beta, cov),
            delta=1e-8,
        )

    def test_modes_solve_penalized_score(self):
        """Test that the conditional modes zero the penalized gradient"""
        state = conditional_modes(self.design, np.array([-0.6]), covariance(0.9))
        self.assertLess(np.max(np.abs(state.gradient)), 1e-6)
        self.assertEqual(state.modes.shape, (20, 1))
        self.assertTrue(np.all(state.logdet > 0))


class FitMixedTest(SimpleTestCase):
    """Test cases for Laplace maximum-likelihood fits"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        config = GeneratorConfig(
            n_groups=15,
            n_per_group=40,
            beta={"intercept": -0.7, "light": 0.12, "pavement": -0.34},
            sigma={"intercept": 0.9, "light": 0.5},
            seed=3,
        )
        cls.data = generate(config)
        terms = "light,pavement"
        cls.specs = {
            "glm": ModelSpec.preset("glm", terms),
            "ri": ModelSpec.preset("ri", terms),
            "rc": ModelSpec.preset("rc", terms, "light"),
        }
        cls.designs = {k: encode_design(cls.data, s) for k, s in cls.specs.items()}
        cls.glm = fit_glm(cls.designs["glm"])
        cls.ri = fit_mixed(cls.designs["ri"], start=cls.glm)
        cls.rc = fit_mixed(cls.designs["rc"], start=cls.ri)

    def test_random_intercept_fit(self):
        """Test the fields of a random-intercept fit"""
        fit = self.ri
        self.assertTrue(fit.converged)
        self.assertEqual(fit.n_params, 4)
        self.assertEqual(fit.n_groups, 15)
        self.assertEqual(fit.conditional_modes.shape, (15, 1))
        self.assertGreater(fit.cov.variances[0], 0.0)
        self.assertTrue(np.all(np.isfinite(fit.fixed_std_errors)))
        self.assertTrue(np.all(fit.fixed_std_errors > 0))
        self.assertTrue(0.0 < fit.icc < 1.0)
        np.testing.assert_allclose(
            fit.random_effects, fit.conditional_modes * fit.cov.theta[0, 0]
        )

    def test_deviance_nesting(self):
        """Test deviance(rc) <= deviance(ri) <= deviance(glm)"""
        self.assertLessEqual(self.ri.deviance, self.glm.deviance + 1e-4)
        self.assertLessEqual(self.rc.deviance, self.ri.deviance + 1e-4)

    def test_random_coefficient_fit(self):
        """Test variance components of a random-slope fit"""
        fit = self.rc
        self.assertEqual(fit.cov.names, ("intercept", "lighting_night"))
        self.assertEqual(fit.n_params, 3 + 2)
        self.assertEqual(set(fit.variance_components["variances"]), set(fit.cov.names))
        self.assertTrue(np.all(fit.cov.variances >= 0))

    def test_full_covariance_not_worse_than_diagonal(self):
        """Test that an unstructured fit started from the diagonal one does no worse"""
        settings = MixedSettings.from_settings(covariance="full")
        full = fit_mixed(self.designs["rc"], settings=settings, start=self.rc)
        self.assertEqual(full.covariance_structure, "full")
        self.assertEqual(full.n_params, 3 + 3)
        self.assertLessEqual(full.deviance, self.rc.deviance + 1e-4)
        self.assertEqual(full.cov.correlations.shape, (2, 2))

    def test_glm_spec_rejected(self):
        """Test that a spec without a random intercept is not a mixed model"""
        with self.assertRaises(errors.InvalidModelSpec):
            fit_mixed(self.designs["glm"], self.specs["glm"])

    def test_spec_design_mismatch(self):
        """Test that a spec whose columns differ from the design is rejected"""
        with self.assertRaises(errors.DimensionMismatch):
            fit_mixed(self.designs["ri"], ModelSpec.preset("ri", "light"))


class BoundaryFitTest(SimpleTestCase):
    """Test cases for degenerate multilevel data"""

    def test_identical_roads_give_zero_variance(self):
        """Test that roads with identical outcomes put the variance on the boundary"""
        data = dataset({f"R00{j}": [1, 0, 0, 0] for j in range(1, 5)})
        fit = fit_null(data)
        self.assertEqual(fit.cov.variances[0], 0.0)
        self.assertEqual(fit.boundary, INTERCEPT_ONLY)
        self.assertEqual(fit.icc, 0.0)
        glm = fit_glm(encode_design(data, ModelSpec()))
        self.assertAlmostEqual(fit.deviance, glm.deviance, places=8)

    def test_single_observed_road(self):
        """Test that one road with crashes is not enough for a multilevel fit"""
        data = dataset(
            {"R001": [1, 0, 0, 1]}, roads={"R001": road("R001"), "R002": road("R002")}
        )
        with self.assertRaises(errors.InsufficientGroups):
            fit_null(data)

    def test_constant_outcome(self):
        """Test that an outcome without variation is rejected"""
        with self.assertRaises(errors.DegenerateOutcome):
            fit_null(dataset({"R001": [0, 0], "R002": [0, 0, 0]}))


class PredictMixedTest(SimpleTestCase):
    """Test cases for multilevel predictions"""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.data = random_intercept_data(seed=5, groups=10, per_group=30)
        cls.fit = fit_null(cls.data)

    def test_conditional_uses_road_effects(self):
        """Test that conditional predictions add the estimated road effect"""
        design = encode_design(self.data, ModelSpec.preset("null"))
        p = predict_mixed(self.fit, design, "conditional")
        effects = self.fit.random_effects[design.group_index, 0]
        np.testing.assert_allclose(p, special.expit(self.fit.fixed[0] + effects))

    def test_marginal_ignores_road_effects(self):
        """Test that marginal predictions use the fixed part only"""
        design = encode_design(self.data, ModelSpec.preset("null"))
        p = predict_mixed(self.fit, design, "marginal")
        np.testing.assert_allclose(p, special.expit(self.fit.fixed[0]))

    def test_shrinkage_toward_zero(self):
        """Test that every road effect is no larger than that road's own MLE offset"""
        design = encode_design(self.data, ModelSpec.preset("null"))
        counts = np.bincount(design.group_index, minlength=design.J)
        rates = np.bincount(design.group_index, weights=design.y, minlength=design.J) / counts
        with np.errstate(divide="ignore"):
            offsets = special.logit(rates) - self.fit.fixed[0]
        effects = self.fit.random_effects[:, 0]
        self.assertGreater(self.fit.cov.variances[0], 0.0)
        self.assertTrue(np.all(np.abs(effects) <= np.abs(offsets) + 1e-9))

    def test_relabeled_refit(self):
        """Test that refitting with a reordered road table permutes the modes only"""
        reordered = Dataset(
            records=self.data.records,
            roads={key: self.data.roads[key] for key in reversed(self.data.road_ids)},
        )
        other = fit_null(reordered)
        self.assertEqual(other.group_keys, tuple(reversed(self.fit.group_keys)))
        np.testing.assert_allclose(other.fixed, self.fit.fixed, atol=1e-6)
        np.testing.assert_allclose(other.cov.theta, self.fit.cov.theta, atol=1e-6)
        self.assertAlmostEqual(other.log_likelihood, self.fit.log_likelihood, delta=1e-6)
        np.testing.assert_allclose(
            other.conditional_modes, self.fit.conditional_modes[::-1], atol=1e-5
        )

    def test_road_without_crashes_has_zero_mode(self):
        """Test that a road with no observations keeps a mode of exactly zero"""
        roads = {**self.data.roads, "R999": road("R999")}
        fit = fit_null(Dataset(records=self.data.records, roads=roads))
        self.assertGreater(fit.cov.variances[0], 0.0)
        index = fit.group_keys.index("R999")
        self.assertEqual(fit.conditional_modes[index, 0], 0.0)
        self.assertEqual(fit.random_effects[index, 0], 0.0)

    def test_unseen_road_gets_zero_effect(self):
        """Test that a road absent at training predicts like the marginal model"""
        records = list(self.data.records[:3]) + [crash(99999, "R999", 1)]
        roads = {**self.data.roads, "R999": road("R999")}
        design = encode_design(Dataset(records=records, roads=roads), ModelSpec.preset("null"))
        conditional = predict_mixed(self.fit, design, "conditional")
        marginal = predict_mixed(self.fit, design, "marginal")
        self.assertEqual(conditional[-1], marginal[-1])

    def test_unknown_mode(self):
        """Test that an unknown prediction mode is rejected"""
        design = encode_design(self.data, ModelSpec.preset("null"))
        with self.assertRaises(errors.InvalidConfig):
            predict_mixed(self.fit, design, "posterior")
