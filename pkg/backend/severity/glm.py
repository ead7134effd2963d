"""
Single-level logistic regression fitted by iteratively reweighted least squares.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from . import errors
from .conf import GlmSettings

logger = logging.getLogger(__name__)


def bernoulli_loglik(y, eta):
    """Sum of y*eta - log(1 + exp(eta)), stable for large |eta|"""
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def score(design, beta):
    """Gradient of the log-likelihood, X'(y - p)"""
    return design.X.T @ (design.y - special.expit(design.X @ beta))


def _clip_probabilities(p):
    tiny = np.finfo(float).eps
    return np.clip(p, tiny, 1.0 - tiny)


@dataclass(frozen=True, eq=False)
class GlmFit:
    spec: object
    column_names: tuple
    coefficients: np.ndarray
    std_errors: np.ndarray
    covariance: np.ndarray
    log_likelihood: float
    n_obs: int
    converged: bool
    iterations: int

    @property
    def deviance(self):
        return -2.0 * self.log_likelihood

    @property
    def n_params(self):
        return len(self.coefficients)

    @property
    def fixed(self):
        return self.coefficients

    @property
    def fixed_std_errors(self):
        return self.std_errors


def _information(X, mu):
    w = mu * (1.0 - mu)
    return X.T @ (w[:, None] * X)


def fit_glm(design, tolerance=None, max_iter=None, separation_bound=None):
    """
    Maximum-likelihood logistic regression by IRLS (Newton scoring).

    Steps that would increase the deviance are halved. Convergence means the
    relative deviance change fell below ``tolerance`` within ``max_iter``
    iterations. A coefficient growing past ``separation_bound`` while the
    deviance keeps decreasing is reported as separation.
    """
    settings = GlmSettings.from_settings(
        tolerance=tolerance, max_iter=max_iter, separation_bound=separation_bound
    )
    if settings.tolerance <= 0 or settings.max_iter < 1:
        raise errors.InvalidConfig("tolerance must be > 0 and max_iter >= 1")
    X, y = design.X, design.y
    if np.linalg.matrix_rank(X) < design.p:
        raise errors.SingularInformation(
            "Fixed-effects matrix is rank deficient; a column repeats or is constant"
        )

    beta = np.zeros(design.p)
    dev = -2.0 * bernoulli_loglik(y, X @ beta)
    converged = False
    iterations = 0
    for iterations in range(1, settings.max_iter + 1):
        mu = special.expit(X @ beta)
        try:
            factor = linalg.cho_factor(_information(X, mu))
        except linalg.LinAlgError as exc:
            raise errors.SingularInformation(
                f"Weighted normal equations are not solvable at iteration {iterations}"
            ) from exc
        step = linalg.cho_solve(factor, X.T @ (y - mu))

        candidate = beta + step
        new_dev = -2.0 * bernoulli_loglik(y, X @ candidate)
        halvings = 0
        while new_dev > dev and halvings < 30:
            step /= 2.0
            candidate = beta + step
            new_dev = -2.0 * bernoulli_loglik(y, X @ candidate)
            halvings += 1

        if np.max(np.abs(candidate)) > settings.separation_bound and new_dev <= dev:
            raise errors.SeparationDetected(
                f"Coefficient magnitude exceeded {settings.separation_bound:g} "
                f"after {iterations} iterations; the outcome is (quasi-)separated"
            )

        change = abs(dev - new_dev) / max(abs(new_dev), np.finfo(float).tiny)
        beta, dev = candidate, new_dev
        if change < settings.tolerance:
            converged = True
            break

    if not converged:
        logger.warning("IRLS stopped after %d iterations without converging", iterations)

    try:
        covariance = linalg.inv(_information(X, special.expit(X @ beta)))
    except linalg.LinAlgError as exc:
        raise errors.SingularInformation("Information matrix is singular") from exc
    fit = GlmFit(
        spec=design.spec,
        column_names=design.column_names,
        coefficients=beta,
        std_errors=np.sqrt(np.diag(covariance)),
        covariance=covariance,
        log_likelihood=-0.5 * dev,
        n_obs=design.n,
        converged=converged,
        iterations=iterations,
    )
    logger.info("GLM fit: deviance %.4f after %d iterations", fit.deviance, iterations)
    return fit


def predict_glm(fit, design):
    if design.p != fit.n_params or tuple(design.column_names) != tuple(fit.column_names):
        raise errors.DimensionMismatch(
            f"Design columns {design.column_names} do not match the fit {fit.column_names}"
        )
    return _clip_probabilities(special.expit(design.X @ fit.coefficients))
