"""
Synthetic road-nested crash data with known parameters, and the simulation of
coefficient variability around a fitted multilevel model.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np
import pandas as pd
from scipy import special

from . import artifacts, errors
from .datamodel import (
    CRASH_TERMS,
    INTERCEPT,
    CrashRecord,
    Dataset,
    RoadProfile,
    resolve_term,
)
from .glm import GlmFit

logger = logging.getLogger(__name__)

DEFAULT_RATES = MappingProxyType(
    {
        "lighting_night": 0.34,
        "pavement_adverse": 0.11,
        "geometry_curve": 0.37,
        "weather_adverse": 0.10,
        "driver_no_university": 0.90,
        "driver_under_30": 0.32,
        "driver_male": 0.95,
    }
)


def _canonical(mapping, what):
    resolved = {}
    for key, value in dict(mapping).items():
        name = INTERCEPT if key == INTERCEPT else resolve_term(key)
        if name in resolved:
            raise errors.InvalidConfig(f"{what} lists '{name}' twice")
        resolved[name] = float(value)
    return MappingProxyType(resolved)


@dataclass(frozen=True)
class RoadCovariateLaw:
    """AADT is log-normal around its median; the other two are uniform"""

    aadt_median: float = 8110.0
    aadt_log_sd: float = 0.5
    access_range: tuple = (0.0, 2.2)
    heavy_range: tuple = (0.0, 0.21)

    def __post_init__(self):
        if self.aadt_median <= 0 or self.aadt_log_sd < 0:
            raise errors.InvalidConfig("AADT law needs median > 0 and log sd >= 0")
        lo, hi = self.access_range
        if not 0.0 <= lo <= hi:
            raise errors.InvalidConfig(f"Invalid access_density range {self.access_range}")
        lo, hi = self.heavy_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise errors.InvalidConfig(f"Invalid heavy_vehicle_ratio range {self.heavy_range}")


@dataclass(frozen=True)
class GeneratorConfig:
    n_groups: int = 100
    n_per_group: object = 200
    beta: MappingProxyType = field(default_factory=lambda: {INTERCEPT: 0.0})
    sigma: MappingProxyType = field(default_factory=lambda: {INTERCEPT: 0.0})
    covariate_rates: MappingProxyType = field(default_factory=lambda: DEFAULT_RATES)
    road_law: RoadCovariateLaw = field(default_factory=RoadCovariateLaw)
    seed: int = 0

    def __post_init__(self):
        if int(self.n_groups) < 1:
            raise errors.InvalidConfig(f"n_groups must be >= 1, got {self.n_groups}")
        object.__setattr__(self, "n_groups", int(self.n_groups))
        counts = np.asarray(self.n_per_group)
        if counts.ndim and counts.shape != (self.n_groups,):
            raise errors.InvalidConfig("n_per_group must list one count per road")
        if counts.dtype.kind not in "iu":
            raise errors.InvalidConfig("n_per_group must be an integer or integers")
        counts = np.broadcast_to(counts, (self.n_groups,))
        if np.any(counts < 0) or counts.sum() == 0:
            raise errors.InvalidConfig("n_per_group must be >= 0 with at least one crash")
        object.__setattr__(self, "n_per_group", tuple(int(c) for c in counts))

        beta = _canonical(self.beta, "beta")
        sigma = _canonical(self.sigma, "sigma")
        if any(v < 0 for v in sigma.values()):
            raise errors.InvalidConfig("Random-effect standard deviations must be >= 0")
        rates = _canonical({**DEFAULT_RATES, **dict(self.covariate_rates)}, "rates")
        unknown = [k for k in rates if k not in CRASH_TERMS]
        if unknown:
            raise errors.InvalidConfig(f"Rates given for non-binary terms {unknown}")
        if any(not 0.0 <= v <= 1.0 for v in rates.values()):
            raise errors.InvalidConfig("Covariate rates must lie in [0, 1]")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "covariate_rates", rates)

    @property
    def counts(self):
        return np.array(self.n_per_group, dtype=np.intp)

    @property
    def random_names(self):
        slopes = tuple(k for k in self.sigma if k != INTERCEPT)
        return (INTERCEPT,) + slopes

    def to_dict(self):
        return {
            "n_groups": self.n_groups,
            "n_per_group": list(self.n_per_group),
            "beta": dict(self.beta),
            "sigma": dict(self.sigma),
            "covariate_rates": dict(self.covariate_rates),
            "road_law": {
                "aadt_median": self.road_law.aadt_median,
                "aadt_log_sd": self.road_law.aadt_log_sd,
                "access_range": list(self.road_law.access_range),
                "heavy_range": list(self.road_law.heavy_range),
            },
            "seed": self.seed,
        }


def _study(seed):
    # 57 roads with 202 crashes and 42 with 201: 19,956 crashes on 99 roads
    return GeneratorConfig(
        n_groups=99,
        n_per_group=[202] * 57 + [201] * 42,
        beta={
            INTERCEPT: -0.653,
            "education": 0.459,
            "age": 0.261,
            "light": 0.118,
            "pavement": -0.339,
        },
        sigma={
            INTERCEPT: np.sqrt(0.826),
            "education": np.sqrt(0.061),
            "age": np.sqrt(0.118),
            "light": np.sqrt(0.110),
            "pavement": np.sqrt(0.259),
        },
        seed=seed,
    )


def _high_icc(seed):
    return GeneratorConfig(
        n_groups=100,
        n_per_group=200,
        beta={
            INTERCEPT: -0.7,
            "education": 0.46,
            "age": 0.26,
            "light": 0.12,
            "pavement": -0.34,
        },
        sigma={INTERCEPT: np.sqrt(0.84), "pavement": np.sqrt(0.26)},
        seed=seed,
    )


PRESETS = MappingProxyType(
    {"paper-like": _study, "study": _study, "high-icc": _high_icc}
)


def preset(name, seed=0):
    try:
        factory = PRESETS[name]
    except KeyError:
        raise errors.InvalidConfig(
            f"Unknown preset '{name}'; choose from {', '.join(PRESETS)}"
        ) from None
    return factory(seed)


def generate(config):
    """
    Draw a Dataset from the two-level logistic model described by ``config``.

    Draw order from one seeded generator: road covariates, road effects,
    crash covariates (column order), outcomes. AADT is rounded to whole
    vehicles per day and the uniform road covariates to four decimals, so the
    written CSVs reload to the same values.
    """
    rng = np.random.default_rng(int(config.seed) % 2**64)
    law = config.road_law
    J = config.n_groups
    counts = config.counts
    n = int(counts.sum())

    aadt = np.maximum(
        np.rint(law.aadt_median * np.exp(law.aadt_log_sd * rng.standard_normal(J))), 1.0
    )
    access = np.round(rng.uniform(*law.access_range, size=J), 4)
    heavy = np.round(rng.uniform(*law.heavy_range, size=J), 4)
    width = max(3, len(str(J)))
    road_ids = [f"R{j + 1:0{width}d}" for j in range(J)]
    roads = {
        rid: RoadProfile(rid, float(aadt[j]), float(access[j]), float(heavy[j]))
        for j, rid in enumerate(road_ids)
    }

    names = config.random_names
    sd = np.array([config.sigma.get(name, 0.0) for name in names])
    effects = rng.standard_normal((J, len(names))) * sd

    group = np.repeat(np.arange(J), counts)
    covariates = {
        term: (rng.random(n) < config.covariate_rates[term]).astype(int)
        for term in CRASH_TERMS
    }
    covariates["log_aadt"] = np.log(aadt)[group]
    covariates["access_density"] = access[group]
    covariates["heavy_vehicle_ratio"] = heavy[group]

    eta = np.full(n, config.beta.get(INTERCEPT, 0.0))
    for term, coefficient in config.beta.items():
        if term != INTERCEPT:
            eta += coefficient * covariates[term]
    eta += effects[group, 0]
    for k, term in enumerate(names[1:], start=1):
        eta += effects[group, k] * covariates[term]
    severity = (rng.random(n) < special.expit(eta)).astype(int)

    width = max(6, len(str(n)))
    records = [
        CrashRecord(
            crash_id=f"C{i + 1:0{width}d}",
            road_id=road_ids[group[i]],
            severity=int(severity[i]),
            **{term: int(covariates[term][i]) for term in CRASH_TERMS},
        )
        for i in range(n)
    ]
    dataset = Dataset(records=records, roads=roads)
    logger.info(
        "Generated %d crashes on %d roads (positive rate %.4f)",
        n,
        J,
        severity.mean(),
    )
    return dataset


@dataclass(frozen=True, eq=False)
class SimulationSummary:
    runs: int
    road_ids: tuple
    intercept_means: np.ndarray
    slope_names: tuple
    slope_means: np.ndarray
    terms: tuple
    fixed_means: np.ndarray
    fixed_lower: np.ndarray
    fixed_upper: np.ndarray

    @property
    def per_group_intercept_mean(self):
        return dict(zip(self.road_ids, self.intercept_means))

    @property
    def fixed_effect_intervals(self):
        return {
            term: (mean, lo, hi)
            for term, mean, lo, hi in zip(
                self.terms, self.fixed_means, self.fixed_lower, self.fixed_upper
            )
        }

    def intercepts_frame(self):
        return pd.DataFrame(
            {"road_id": list(self.road_ids), "mean_intercept": self.intercept_means}
        )

    def intervals_frame(self):
        return pd.DataFrame(
            {
                "term": list(self.terms),
                "mean": self.fixed_means,
                "lo": self.fixed_lower,
                "hi": self.fixed_upper,
            }
        )

    def slopes_frame(self):
        frame = pd.DataFrame({"road_id": list(self.road_ids)})
        for k, name in enumerate(self.slope_names):
            frame[f"mean_{name}"] = self.slope_means[:, k]
        return frame

    def write(self, out_dir):
        out_dir = Path(out_dir)
        paths = [
            artifacts.write_frame(
                out_dir / "roads_intercepts.csv", self.intercepts_frame(), "%.6g"
            ),
            artifacts.write_frame(
                out_dir / "fixed_intervals.csv", self.intervals_frame(), "%.6g"
            ),
        ]
        if self.slope_names:
            paths.append(
                artifacts.write_frame(out_dir / "roads_slopes.csv", self.slopes_frame(), "%.6g")
            )
        return paths


def simulate_coefficients(fit, runs, seed):
    """
    Sample coefficients around a fitted multilevel model.

    Draw ``s`` uses its own generator, spawned as child ``s`` of
    ``SeedSequence(seed)``: fixed effects come from N(beta_hat, V_beta) and
    each road's standardized effects from N(u_hat_j, diag(sd_j^2)), mapped to
    the log-odds scale through the covariance factor. Reports the per-road
    mean of each random effect and per-term means with 2.5/97.5 percentile
    intervals of the fixed effects.
    """
    if isinstance(fit, GlmFit):
        raise errors.InvalidModelSpec("Coefficient simulation needs a multilevel fit")
    if not fit.converged:
        raise errors.NotConverged("Cannot simulate from a fit that did not converge")
    if int(runs) < 1:
        raise errors.InvalidConfig(f"runs must be >= 1, got {runs}")
    runs = int(runs)

    children = np.random.SeedSequence(int(seed) % 2**64).spawn(runs)
    J, q = fit.conditional_modes.shape
    theta = fit.cov.theta
    fixed_draws = np.empty((runs, len(fit.fixed)))
    effect_sums = np.zeros((J, q))
    for s, child in enumerate(children):
        rng = np.random.default_rng(child)
        fixed_draws[s] = rng.multivariate_normal(fit.fixed, fit.fixed_covariance)
        u = fit.conditional_modes + fit.conditional_sds * rng.standard_normal((J, q))
        effect_sums += u @ theta.T
    effect_means = effect_sums / runs

    lower, upper = np.percentile(fixed_draws, [2.5, 97.5], axis=0)
    summary = SimulationSummary(
        runs=runs,
        road_ids=tuple(fit.group_keys),
        intercept_means=effect_means[:, 0],
        slope_names=tuple(fit.cov.names[1:]),
        slope_means=effect_means[:, 1:],
        terms=tuple(fit.column_names),
        fixed_means=fixed_draws.mean(axis=0),
        fixed_lower=lower,
        fixed_upper=upper,
    )
    logger.info("Simulated %d coefficient draws over %d roads", runs, J)
    return summary
