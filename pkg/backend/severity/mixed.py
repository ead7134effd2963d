"""
Two-level logistic models fitted by Laplace-approximated maximum likelihood.

For crash i on road j the linear predictor is

    eta_ij = x_ij' beta + z_ij' L u_j,    u_j ~ N(0, I_q)

where z_ij is 1 followed by the random-slope covariates and L is the
lower-triangular factor of the road-effect covariance Sigma = L L'. The road
effects on the log-odds scale are b_j = L u_j.

Per road, penalized IRLS finds the conditional mode of u_j; the Laplace
log-likelihood is the penalized log-likelihood at the modes minus half the
log-determinant of each road's penalized information. The outer loop runs
L-BFGS-B over (beta, theta) with numerically differentiated gradients.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize, sparse, special

from . import errors
from .conf import MixedSettings
from .datamodel import ModelSpec, encode_design
from .glm import GlmFit, fit_glm

logger = logging.getLogger(__name__)

LEVEL1_VARIANCE = np.pi**2 / 3.0

STRUCTURES = ("diagonal", "full")


def icc(sigma0_sq):
    """Share of latent variance between roads: s / (s + pi^2/3)"""
    if sigma0_sq < 0:
        raise errors.NegativeVariance(f"Variance must be >= 0, got {sigma0_sq}")
    return float(sigma0_sq) / (float(sigma0_sq) + LEVEL1_VARIANCE)


def information_criteria(fit):
    """AIC = deviance + 2k, BIC = deviance + k ln(n) with k = n_params"""
    k = fit.n_params
    aic = fit.deviance + 2.0 * k
    bic = fit.deviance + k * np.log(fit.n_obs)
    return float(aic), float(bic)


@dataclass(frozen=True, eq=False)
class CovarianceParams:
    theta: np.ndarray
    names: tuple

    def __post_init__(self):
        theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        q = len(self.names)
        if theta.shape != (q, q):
            raise errors.DimensionMismatch(f"theta must be {q}x{q}, got {theta.shape}")
        if np.any(np.triu(theta, 1) != 0.0):
            raise errors.InvalidConfig("theta must be lower triangular")
        if np.any(np.diag(theta) < 0.0):
            raise errors.InvalidConfig("theta diagonal must be nonnegative")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def q(self):
        return len(self.names)

    @property
    def sigma(self):
        return self.theta @ self.theta.T

    @property
    def variances(self):
        return np.diag(self.sigma)

    @property
    def std_devs(self):
        return np.sqrt(self.variances)

    @property
    def correlations(self):
        sd = self.std_devs
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = self.sigma / np.outer(sd, sd)
        corr[~np.isfinite(corr)] = 0.0
        np.fill_diagonal(corr, 1.0)
        return corr

    @property
    def boundary(self):
        return tuple(n for n, v in zip(self.names, self.variances) if v == 0.0)

    @staticmethod
    def free_count(q, structure):
        return q if structure == "diagonal" else q * (q + 1) // 2

    def to_vector(self, structure):
        if structure == "diagonal":
            return np.diag(self.theta).copy()
        return self.theta[np.tril_indices(self.q)].copy()

    @classmethod
    def from_vector(cls, vector, names, structure):
        q = len(names)
        theta = np.zeros((q, q))
        if structure == "diagonal":
            theta[np.diag_indices(q)] = vector
        else:
            theta[np.tril_indices(q)] = vector
        return cls(theta=theta, names=names)


@dataclass(frozen=True, eq=False)
class ModeState:
    """Conditional modes of u_j and the penalized information at them"""

    modes: np.ndarray
    eta: np.ndarray
    penalized: np.ndarray
    hessians: np.ndarray
    logdet: np.ndarray
    gradient: np.ndarray
    weights: np.ndarray
    A: np.ndarray
    iterations: int

    @property
    def laplace_loglik(self):
        return float(np.sum(self.penalized) - 0.5 * np.sum(self.logdet))

    @property
    def conditional_sds(self):
        return np.sqrt(np.diagonal(np.linalg.inv(self.hessians), axis1=1, axis2=2))


class LaplaceProblem:
    """Laplace objective for one design; keeps the last modes as a warm start"""

    GRAD_EXIT = 1e-10
    GRAD_STOP = 1e-7

    def __init__(self, design, settings=None):
        self.design = design
        self.settings = settings or MixedSettings.from_settings()
        self.X = design.X
        self.y = design.y
        self.Z = design.Z
        self.q = design.q
        self.group = design.group_index
        self.G = sparse.csr_matrix(
            (np.ones(design.n), (design.group_index, np.arange(design.n))),
            shape=(design.J, design.n),
        )
        self.warm = np.zeros((design.J, self.q))

    def group_sum(self, values):
        values = np.asarray(values)
        if values.ndim == 1:
            return np.asarray(self.G @ values).ravel()
        return np.asarray(self.G @ values)

    def _penalized(self, eta, u):
        ll = self.y * eta - np.logaddexp(0.0, eta)
        return self.group_sum(ll) - 0.5 * np.sum(u * u, axis=1)

    def _curvature(self, A, eta, u):
        n, q = A.shape
        mu = special.expit(eta)
        w = mu * (1.0 - mu)
        grad = self.group_sum(A * (self.y - mu)[:, None]) - u
        outer = (w[:, None, None] * A[:, :, None] * A[:, None, :]).reshape(n, q * q)
        hess = self.group_sum(outer).reshape(-1, q, q) + np.eye(q)
        return grad, hess, w

    def modes(self, beta, theta):
        """Penalized IRLS for every road at once, with per-road step halving"""
        settings = self.settings
        A = self.Z @ theta
        offset = self.X @ beta
        u = self.warm.copy()
        eta = offset + np.einsum("ij,ij->i", A, u[self.group])
        h = self._penalized(eta, u)
        change = np.inf
        iterations = 0
        for iterations in range(1, settings.inner_max_iter + 1):
            grad, hess, w = self._curvature(A, eta, u)
            largest = np.max(np.abs(grad)) if grad.size else 0.0
            if largest <= self.GRAD_EXIT or (
                change < settings.inner_tolerance and largest <= self.GRAD_STOP
            ):
                break
            step = np.linalg.solve(hess, grad[..., None])[..., 0]
            new_u = u + step
            new_eta = offset + np.einsum("ij,ij->i", A, new_u[self.group])
            new_h = self._penalized(new_eta, new_u)
            worse = new_h < h - 1e-13 * (1.0 + np.abs(h))
            halvings = 0
            while np.any(worse) and halvings < 30:
                step[worse] /= 2.0
                new_u = u + step
                new_eta = offset + np.einsum("ij,ij->i", A, new_u[self.group])
                new_h = self._penalized(new_eta, new_u)
                worse = new_h < h - 1e-13 * (1.0 + np.abs(h))
                halvings += 1
            old_total, new_total = -2.0 * h.sum(), -2.0 * new_h.sum()
            change = abs(old_total - new_total) / max(abs(new_total), np.finfo(float).tiny)
            u, eta, h = new_u, new_eta, new_h
        else:
            grad, hess, w = self._curvature(A, eta, u)
            logger.debug("Inner PIRLS hit its cap of %d iterations", settings.inner_max_iter)

        self.warm = u
        chol = np.linalg.cholesky(hess)
        logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=1, axis2=2)), axis=1)
        return ModeState(
            modes=u,
            eta=eta,
            penalized=h,
            hessians=hess,
            logdet=logdet,
            gradient=grad,
            weights=w,
            A=A,
            iterations=iterations,
        )

    def loglik(self, beta, theta):
        return self.modes(beta, theta).laplace_loglik

    def fixed_covariance(self, beta, state):
        """
        Inverse of the fixed-effect information with theta held fixed: the
        Schur complement of the joint penalized information at the modes.
        """
        X, A, w = self.X, state.A, state.weights
        n, p = X.shape
        q = A.shape[1]
        info = X.T @ (w[:, None] * X)
        cross = self.group_sum(
            (w[:, None, None] * X[:, :, None] * A[:, None, :]).reshape(n, p * q)
        ).reshape(-1, p, q)
        solved = np.linalg.solve(state.hessians, cross.transpose(0, 2, 1))
        info = info - np.einsum("jpq,jqr->pr", cross, solved)
        try:
            factor = linalg.cho_factor(0.5 * (info + info.T))
        except linalg.LinAlgError as exc:
            raise errors.SingularInformation(
                "Fixed-effect information of the Laplace objective is singular"
            ) from exc
        return linalg.cho_solve(factor, np.eye(p))


def laplace_loglik(design, beta, cov, settings=None):
    """Laplace-approximate marginal log-likelihood at (beta, cov)"""
    return LaplaceProblem(design, settings).loglik(np.asarray(beta, float), cov.theta)


def conditional_modes(design, beta, cov, settings=None):
    return LaplaceProblem(design, settings).modes(np.asarray(beta, float), cov.theta)


@dataclass(frozen=True, eq=False)
class MixedFit:
    spec: ModelSpec
    column_names: tuple
    group_keys: tuple
    fixed: np.ndarray
    fixed_std_errors: np.ndarray
    fixed_covariance: np.ndarray
    cov: CovarianceParams
    covariance_structure: str
    conditional_modes: np.ndarray
    conditional_sds: np.ndarray
    log_likelihood: float
    n_obs: int
    n_groups: int
    converged: bool
    outer_iterations: int

    @property
    def deviance(self):
        return -2.0 * self.log_likelihood

    @property
    def n_params(self):
        return len(self.fixed) + CovarianceParams.free_count(
            self.cov.q, self.covariance_structure
        )

    @property
    def variance_components(self):
        return {
            "variances": dict(zip(self.cov.names, self.cov.variances)),
            "correlations": self.cov.correlations,
        }

    @property
    def random_effects(self):
        """Conditional modes on the log-odds scale, b_j = L u_j"""
        return self.conditional_modes @ self.cov.theta.T

    @property
    def boundary(self):
        return self.cov.boundary

    @property
    def icc(self):
        return icc(self.cov.variances[0])


def _check_spec(design, spec):
    if not spec.is_mixed:
        raise errors.InvalidModelSpec("Mixed fits need a random intercept; use fit_glm")
    if tuple(design.column_names) != spec.column_names:
        raise errors.DimensionMismatch(
            f"Design columns {design.column_names} do not match {spec.column_names}"
        )
    slopes = tuple(design.column_names[c] for c in design.z_cols)
    if slopes != spec.random_slope_terms:
        raise errors.DimensionMismatch(
            f"Design random slopes {slopes} do not match {spec.random_slope_terms}"
        )


def _embed(start, column_names, names):
    """Map a nested fit's estimates onto this model's parameters"""
    beta = np.zeros(len(column_names))
    for name, value in zip(start.column_names, start.fixed):
        if name not in column_names:
            raise errors.InvalidModelSpec(
                f"Start fit term '{name}' is not part of this model"
            )
        beta[column_names.index(name)] = value
    theta = np.zeros((len(names), len(names)))
    if isinstance(start, MixedFit):
        for a, row in enumerate(start.cov.names):
            for b, col in enumerate(start.cov.names[: a + 1]):
                if row in names and col in names:
                    theta[names.index(row), names.index(col)] = start.cov.theta[a, b]
    return beta, theta


def lbfgs_converged(result, lower, tolerance):
    """
    L-BFGS-B status 0 is convergence and status 1 an exhausted budget. Status 2
    (line search failed) counts as converged when the projected gradient,
    relative to max(1, |f|), is within ``tolerance``.
    """
    if result.status != 2:
        return result.status == 0
    gradient = np.asarray(result.jac, dtype=float).copy()
    pinned = (np.asarray(result.x) <= lower) & (gradient > 0)
    gradient[pinned] = 0.0
    return bool(np.max(np.abs(gradient)) <= tolerance * max(1.0, abs(float(result.fun))))


def fit_mixed(design, model_spec=None, settings=None, start=None):
    """
    Laplace maximum-likelihood fit of a random-intercept or random-coefficient
    logistic model.

    ``start`` may be a GlmFit or MixedFit of a nested model on the same data.
    Its estimates seed the optimizer and remain a candidate optimum, so the
    returned deviance never exceeds the nested model's. The single-level fit
    used for starting values is always such a candidate.
    """
    spec = model_spec or design.spec
    settings = settings or MixedSettings.from_settings()
    if settings.covariance not in STRUCTURES:
        raise errors.InvalidConfig(
            f"Unknown covariance structure '{settings.covariance}'"
        )
    _check_spec(design, spec)
    observed = int(np.count_nonzero(design.group_sizes()))
    if observed < 2:
        raise errors.InsufficientGroups(observed)
    if np.all(design.y == design.y[0]):
        raise errors.DegenerateOutcome("The outcome takes a single value")

    structure = settings.covariance
    names = spec.random_names
    p, q = design.p, design.q
    mask = _diagonal_mask(q, structure)
    lower = np.where(mask, 0.0, -np.inf)
    problem = LaplaceProblem(design, settings)

    def unpack(x):
        cov = CovarianceParams.from_vector(np.maximum(x[p:], lower), names, structure)
        return x[:p], cov

    def objective(x):
        beta, cov = unpack(x)
        return -problem.loglik(beta, cov.theta)

    glm = fit_glm(design)
    candidates = [np.concatenate([glm.coefficients, np.zeros(mask.size)])]
    x0 = np.concatenate([glm.coefficients, np.where(mask, settings.theta_start, 0.0)])
    if start is not None:
        beta0, theta0 = _embed(start, spec.column_names, names)
        nested = np.concatenate(
            [beta0, CovarianceParams(theta0, names).to_vector(structure)]
        )
        candidates.append(nested)
        x0 = nested.copy()
        x0[p:] = np.where(mask & (nested[p:] <= 0.0), settings.theta_start, nested[p:])

    bounds = [(None, None)] * p + [(0.0 if m else None, None) for m in mask]
    logger.info(
        "Fitting %s mixed model: n=%d, roads=%d, p=%d, q=%d",
        structure,
        design.n,
        observed,
        p,
        q,
    )
    result = optimize.minimize(
        objective,
        x0,
        method="L-BFGS-B",
        jac="3-point",
        bounds=bounds,
        options={
            "maxiter": settings.outer_max_iter,
            "maxfun": settings.outer_max_iter * (2 * len(x0) + 5),
            "ftol": settings.outer_tolerance,
            "gtol": settings.param_tolerance,
        },
    )
    converged = lbfgs_converged(
        result, np.concatenate([np.full(p, -np.inf), lower]), settings.param_tolerance
    )
    if not converged:
        logger.warning(
            "Outer optimization stopped after %d iterations: %s",
            result.nit,
            result.message,
        )

    best_x, best_f = result.x.copy(), objective(result.x)
    for candidate in candidates:
        value = objective(candidate)
        if value < best_f:
            best_x, best_f = candidate.copy(), value
    floored = mask & (best_x[p:] < settings.theta_floor)
    best_x[p:] = np.where(floored, 0.0, best_x[p:])

    beta, cov = unpack(best_x)
    beta = beta.copy()
    state = problem.modes(beta, cov.theta)
    fixed_covariance = problem.fixed_covariance(beta, state)
    fit = MixedFit(
        spec=spec,
        column_names=design.column_names,
        group_keys=design.group_keys,
        fixed=beta,
        fixed_std_errors=np.sqrt(np.diag(fixed_covariance)),
        fixed_covariance=fixed_covariance,
        cov=cov,
        covariance_structure=structure,
        conditional_modes=state.modes.copy(),
        conditional_sds=state.conditional_sds,
        log_likelihood=state.laplace_loglik,
        n_obs=design.n,
        n_groups=design.J,
        converged=converged,
        outer_iterations=int(result.nit),
    )
    if cov.boundary:
        logger.warning(
            "Variance components at the boundary: %s", ", ".join(cov.boundary)
        )
    logger.info(
        "Mixed fit: deviance %.4f after %d outer iterations", fit.deviance, result.nit
    )
    return fit


def _diagonal_mask(q, structure):
    if structure == "diagonal":
        return np.ones(q, dtype=bool)
    rows, cols = np.tril_indices(q)
    return rows == cols


def fit_null(dataset, settings=None):
    """Intercept-only model with a random road intercept"""
    spec = ModelSpec.preset("null")
    return fit_mixed(encode_design(dataset, spec), spec, settings)


PREDICTION_MODES = ("conditional", "marginal")


def predict_mixed(fit, design, mode="conditional"):
    """
    Predicted probabilities; conditional mode adds the road effects estimated
    at training, with zero for roads the fit never saw.
    """
    if mode not in PREDICTION_MODES:
        raise errors.InvalidConfig(f"Unknown prediction mode '{mode}'")
    if tuple(design.column_names) != tuple(fit.column_names):
        raise errors.DimensionMismatch(
            f"Design columns {design.column_names} do not match the fit {fit.column_names}"
        )
    slopes = tuple(design.column_names[c] for c in design.z_cols)
    if slopes != fit.cov.names[1:]:
        raise errors.DimensionMismatch(
            f"Design random slopes {slopes} do not match the fit {fit.cov.names[1:]}"
        )
    eta = design.X @ fit.fixed
    if mode == "conditional":
        lookup = {key: j for j, key in enumerate(fit.group_keys)}
        rows = np.array([lookup.get(key, -1) for key in design.group_keys])[
            design.group_index
        ]
        effects = np.vstack([fit.random_effects, np.zeros(fit.cov.q)])
        eta = eta + np.einsum("ij,ij->i", design.Z, effects[rows])
    tiny = np.finfo(float).eps
    return np.clip(special.expit(eta), tiny, 1.0 - tiny)
