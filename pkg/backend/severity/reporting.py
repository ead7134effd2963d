"""
JSON documents for fitted models.

Displayed numbers carry 6 significant digits. Every fit document also holds a
``state`` block at full precision from which ``load_fit`` rebuilds the fit.
"""

import logging
import math
from pathlib import Path

import numpy as np
from scipy import stats

from . import artifacts, errors
from .datamodel import ModelSpec
from .glm import GlmFit
from .mixed import CovarianceParams, MixedFit, information_criteria

logger = logging.getLogger(__name__)

SIGNIFICANCE_LEVEL = 0.05


def coefficient_table(names, estimates, std_errors):
    """Wald z statistics and two-sided p-values; '*' marks p < 0.05"""
    rows = []
    for term, estimate, se in zip(names, estimates, std_errors):
        z = estimate / se if se > 0 else math.nan
        p_value = 2.0 * stats.norm.sf(abs(z)) if math.isfinite(z) else math.nan
        rows.append(
            {
                "term": term,
                "estimate": artifacts.sig6(estimate),
                "std_error": artifacts.sig6(se),
                "z": artifacts.sig6(z),
                "p_value": artifacts.sig6(p_value),
                "significance": "*" if p_value < SIGNIFICANCE_LEVEL else "",
            }
        )
    return rows


def _fit_block(fit):
    aic, bic = information_criteria(fit)
    block = {
        "n_obs": fit.n_obs,
        "n_params": fit.n_params,
        "log_likelihood": artifacts.sig6(fit.log_likelihood),
        "deviance": artifacts.sig6(fit.deviance),
        "aic": artifacts.sig6(aic),
        "bic": artifacts.sig6(bic),
        "converged": bool(fit.converged),
    }
    if isinstance(fit, MixedFit):
        block["n_groups"] = fit.n_groups
        block["outer_iterations"] = fit.outer_iterations
    else:
        block["iterations"] = fit.iterations
    return block


def _random_block(fit):
    if not isinstance(fit, MixedFit):
        return None
    cov = fit.cov
    block = {
        "structure": fit.covariance_structure,
        "components": [
            {
                "term": name,
                "variance": artifacts.sig6(variance),
                "std_dev": artifacts.sig6(sd),
            }
            for name, variance, sd in zip(cov.names, cov.variances, cov.std_devs)
        ],
        "boundary": list(fit.boundary),
        "icc": artifacts.sig6(fit.icc),
    }
    if fit.covariance_structure == "full":
        block["correlations"] = [[artifacts.sig6(v) for v in row] for row in cov.correlations]
    return block


def model_summary(fit):
    """Coefficients with significance, variance components and fit criteria"""
    return {
        "kind": "mixed" if isinstance(fit, MixedFit) else "glm",
        "spec": fit.spec.to_dict(),
        "fixed_effects": coefficient_table(
            fit.column_names, fit.fixed, fit.fixed_std_errors
        ),
        "random_effects": _random_block(fit),
        "fit": _fit_block(fit),
    }


def _state(fit):
    if isinstance(fit, GlmFit):
        return {
            "kind": "glm",
            "spec": fit.spec.to_dict(),
            "column_names": list(fit.column_names),
            "coefficients": fit.coefficients,
            "std_errors": fit.std_errors,
            "covariance": fit.covariance,
            "log_likelihood": fit.log_likelihood,
            "n_obs": fit.n_obs,
            "converged": fit.converged,
            "iterations": fit.iterations,
        }
    return {
        "kind": "mixed",
        "spec": fit.spec.to_dict(),
        "column_names": list(fit.column_names),
        "group_keys": list(fit.group_keys),
        "fixed": fit.fixed,
        "fixed_std_errors": fit.fixed_std_errors,
        "fixed_covariance": fit.fixed_covariance,
        "random_names": list(fit.cov.names),
        "theta": fit.cov.theta,
        "covariance_structure": fit.covariance_structure,
        "conditional_modes": fit.conditional_modes,
        "conditional_sds": fit.conditional_sds,
        "log_likelihood": fit.log_likelihood,
        "n_obs": fit.n_obs,
        "n_groups": fit.n_groups,
        "converged": fit.converged,
        "outer_iterations": fit.outer_iterations,
    }


def fit_document(fit, name):
    document = {"model": name, **model_summary(fit)}
    if isinstance(fit, MixedFit):
        effects = fit.random_effects
        document["conditional_modes"] = {
            key: {term: artifacts.sig6(v) for term, v in zip(fit.cov.names, row)}
            for key, row in zip(fit.group_keys, effects)
        }
    document["state"] = _state(fit)
    return document


def write_fit(out_dir, name, fit):
    return artifacts.write_json(Path(out_dir) / f"fit_{name}.json", fit_document(fit, name))


def _array(values):
    return np.array(values, dtype=float)


def load_fit(path):
    """Rebuild a GlmFit or MixedFit from a fit document"""
    path = Path(path)
    if not path.is_file():
        raise errors.DataFileNotFound(path)
    try:
        state = artifacts.read_json(path)["state"]
        spec = ModelSpec.from_dict(state["spec"])
        if state["kind"] == "glm":
            return GlmFit(
                spec=spec,
                column_names=tuple(state["column_names"]),
                coefficients=_array(state["coefficients"]),
                std_errors=_array(state["std_errors"]),
                covariance=_array(state["covariance"]),
                log_likelihood=float(state["log_likelihood"]),
                n_obs=int(state["n_obs"]),
                converged=bool(state["converged"]),
                iterations=int(state["iterations"]),
            )
        names = tuple(state["random_names"])
        q = len(names)
        return MixedFit(
            spec=spec,
            column_names=tuple(state["column_names"]),
            group_keys=tuple(state["group_keys"]),
            fixed=_array(state["fixed"]),
            fixed_std_errors=_array(state["fixed_std_errors"]),
            fixed_covariance=_array(state["fixed_covariance"]),
            cov=CovarianceParams(theta=_array(state["theta"]), names=names),
            covariance_structure=state["covariance_structure"],
            conditional_modes=_array(state["conditional_modes"]).reshape(-1, q),
            conditional_sds=_array(state["conditional_sds"]).reshape(-1, q),
            log_likelihood=float(state["log_likelihood"]),
            n_obs=int(state["n_obs"]),
            n_groups=int(state["n_groups"]),
            converged=bool(state["converged"]),
            outer_iterations=int(state["outer_iterations"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise errors.InvalidConfig(f"{path} is not a fit document: {exc}") from exc
