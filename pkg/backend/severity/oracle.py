"""
Gauss-Hermite quadrature of the random-intercept marginal likelihood.

Used to check the Laplace estimator on small problems. Nodes come from the
Golub-Welsch eigendecomposition of the Hermite Jacobi matrix; the adaptive
rule recentres each road's integral at its conditional mode and rescales it
by the curvature there.
"""

import functools
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import linalg, sparse, special

from . import artifacts, errors
from .mixed import LaplaceProblem

logger = logging.getLogger(__name__)

MAX_ORDER = 101


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def m(self):
        return len(self.nodes)


@functools.lru_cache(maxsize=None)
def _hermite(m):
    if m == 1:
        return np.zeros(1), np.full(1, np.sqrt(np.pi))
    off_diagonal = np.sqrt(np.arange(1, m) / 2.0)
    nodes, vectors = linalg.eigh_tridiagonal(np.zeros(m), off_diagonal)
    weights = np.sqrt(np.pi) * vectors[0, :] ** 2
    # exact symmetry about zero
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights


def ghq_rule(m):
    """Gauss-Hermite nodes and weights for the weight function exp(-x^2)"""
    if isinstance(m, bool) or not isinstance(m, (int, np.integer)):
        raise errors.UnsupportedOrder(m)
    if not 1 <= m <= MAX_ORDER:
        raise errors.UnsupportedOrder(m)
    nodes, weights = _hermite(int(m))
    return QuadratureRule(nodes=nodes.copy(), weights=weights.copy())


class QuadratureLikelihood:
    """Marginal log-likelihood of a random-intercept design by quadrature"""

    def __init__(self, design, m=25, adaptive=True):
        if design.z_cols:
            raise errors.DimensionMismatch(
                "The quadrature oracle handles a random intercept only"
            )
        self.design = design
        self.rule = ghq_rule(m)
        self.adaptive = adaptive
        self.G = sparse.csr_matrix(
            (np.ones(design.n), (design.group_index, np.arange(design.n))),
            shape=(design.J, design.n),
        )
        self.empty = design.group_sizes() == 0
        self._modes = LaplaceProblem(design) if adaptive else None
        with np.errstate(divide="ignore"):
            self._log_weights = np.log(self.rule.weights)

    def loglik(self, beta, sigma0):
        design = self.design
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (design.p,):
            raise errors.DimensionMismatch(
                f"beta has length {beta.size}, the design has {design.p} columns"
            )
        if sigma0 < 0:
            raise errors.NegativeVariance(f"sigma0 must be >= 0, got {sigma0}")

        x = self.rule.nodes
        if self.adaptive and sigma0 > 0:
            state = self._modes.modes(beta, np.array([[sigma0]]))
            center = state.modes[:, 0]
            scale = 1.0 / np.sqrt(state.hessians[:, 0, 0])
        else:
            center = np.zeros(design.J)
            scale = np.ones(design.J)

        u = center[:, None] + np.sqrt(2.0) * scale[:, None] * x[None, :]
        eta = (design.X @ beta)[:, None] + sigma0 * u[design.group_index]
        ll = design.y[:, None] * eta - np.logaddexp(0.0, eta)
        group_ll = np.asarray(self.G @ ll)
        log_terms = (
            self._log_weights[None, :]
            + x[None, :] ** 2
            - 0.5 * u**2
            - 0.5 * np.log(2.0 * np.pi)
            + group_ll
        )
        log_integral = np.log(np.sqrt(2.0) * scale) + special.logsumexp(
            log_terms, axis=1
        )
        log_integral[self.empty] = 0.0
        return float(np.sum(log_integral))


def ghq_loglik(design, beta, sigma0, m=25, adaptive=True):
    """
    Random-intercept marginal log-likelihood by (adaptive) Gauss-Hermite
    quadrature. With ``sigma0 = 0`` this is the single-level log-likelihood.
    """
    return QuadratureLikelihood(design, m, adaptive).loglik(beta, sigma0)


@dataclass(frozen=True, eq=False)
class GridReport:
    beta0: np.ndarray
    sigma0: np.ndarray
    loglik: np.ndarray
    fitted_index: tuple
    best_index: tuple

    @property
    def is_optimal(self):
        """The fitted point lies within one grid cell of the grid maximum"""
        return all(abs(a - b) <= 1 for a, b in zip(self.fitted_index, self.best_index))

    @property
    def best_point(self):
        i, j = self.best_index
        return float(self.beta0[i]), float(self.sigma0[j])

    def frame(self):
        b, s = np.meshgrid(self.beta0, self.sigma0, indexing="ij")
        return pd.DataFrame(
            {"beta0": b.ravel(), "sigma0": s.ravel(), "loglik": self.loglik.ravel()}
        )

    def to_csv(self, path):
        return artifacts.write_frame(path, self.frame())


def grid_refit_check(design, beta_hat, sigma0_hat, radius, steps, m=25):
    """
    Evaluate the quadrature log-likelihood on a (beta0, sigma0) grid around a
    random-intercept fit, other coefficients held at their estimates.
    """
    if radius < 0 or steps < 1:
        raise errors.InvalidConfig("radius must be >= 0 and steps >= 1")
    if radius == 0:
        steps = 1
    beta_hat = np.asarray(beta_hat, dtype=float)
    beta_grid = np.linspace(beta_hat[0] - radius, beta_hat[0] + radius, steps)
    sigma_grid = np.linspace(max(sigma0_hat - radius, 0.0), sigma0_hat + radius, steps)

    quadrature = QuadratureLikelihood(design, m, adaptive=True)
    surface = np.empty((steps, steps))
    beta = beta_hat.copy()
    for i, b0 in enumerate(beta_grid):
        beta[0] = b0
        for j, s0 in enumerate(sigma_grid):
            surface[i, j] = quadrature.loglik(beta, s0)

    best = np.unravel_index(int(np.argmax(surface)), surface.shape)
    fitted = (
        int(np.argmin(np.abs(beta_grid - beta_hat[0]))),
        int(np.argmin(np.abs(sigma_grid - sigma0_hat))),
    )
    report = GridReport(
        beta0=beta_grid,
        sigma0=sigma_grid,
        loglik=surface,
        fitted_index=fitted,
        best_index=(int(best[0]), int(best[1])),
    )
    logger.info(
        "Grid check over %dx%d points: fitted %s, best %s at %s, optimal=%s",
        steps,
        steps,
        fitted,
        report.best_index,
        report.best_point,
        report.is_optimal,
    )
    return report
