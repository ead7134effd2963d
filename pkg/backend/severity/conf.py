"""
Access to the ROADRISK settings dict with library defaults.

The severity modules can be used without a configured Django project; in that
case every lookup falls back to DEFAULTS.
"""

from dataclasses import dataclass

from django.conf import settings

DEFAULTS = {
    "SEED": 20240101,
    "OUT_DIR": "out",
    "RECORD_RUNS": True,
    # IRLS for the single-level model
    "GLM_TOLERANCE": 1e-8,
    "GLM_MAX_ITER": 50,
    "SEPARATION_BOUND": 30.0,
    # Laplace fits
    "OUTER_TOLERANCE": 1e-7,
    "PARAM_TOLERANCE": 1e-6,
    "OUTER_MAX_ITER": 500,
    "INNER_TOLERANCE": 1e-9,
    "INNER_MAX_ITER": 100,
    "THETA_START": 0.5,
    "THETA_FLOOR": 1e-6,
    "COVARIANCE": "diagonal",
    # Evaluation and simulation
    "TRAIN_FRACTION": 0.8,
    "THRESHOLD": 0.5,
    "SIMULATION_RUNS": 200,
    "QUADRATURE_NODES": 25,
    # Terms of the default random-coefficient model
    "DEFAULT_TERMS": ["education", "age", "light", "pavement", "aadt"],
    "DEFAULT_SLOPES": ["education", "age", "light", "pavement"],
}


def get(name):
    if name not in DEFAULTS:
        raise KeyError(f"Unknown ROADRISK setting '{name}'")
    if settings.configured:
        overrides = getattr(settings, "ROADRISK", {}) or {}
        if name in overrides:
            return overrides[name]
    return DEFAULTS[name]


@dataclass(frozen=True)
class GlmSettings:
    tolerance: float = DEFAULTS["GLM_TOLERANCE"]
    max_iter: int = DEFAULTS["GLM_MAX_ITER"]
    separation_bound: float = DEFAULTS["SEPARATION_BOUND"]

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            "tolerance": get("GLM_TOLERANCE"),
            "max_iter": get("GLM_MAX_ITER"),
            "separation_bound": get("SEPARATION_BOUND"),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass(frozen=True)
class MixedSettings:
    outer_tolerance: float = DEFAULTS["OUTER_TOLERANCE"]
    param_tolerance: float = DEFAULTS["PARAM_TOLERANCE"]
    outer_max_iter: int = DEFAULTS["OUTER_MAX_ITER"]
    inner_tolerance: float = DEFAULTS["INNER_TOLERANCE"]
    inner_max_iter: int = DEFAULTS["INNER_MAX_ITER"]
    theta_start: float = DEFAULTS["THETA_START"]
    theta_floor: float = DEFAULTS["THETA_FLOOR"]
    covariance: str = DEFAULTS["COVARIANCE"]

    @classmethod
    def from_settings(cls, **overrides):
        values = {
            "outer_tolerance": get("OUTER_TOLERANCE"),
            "param_tolerance": get("PARAM_TOLERANCE"),
            "outer_max_iter": get("OUTER_MAX_ITER"),
            "inner_tolerance": get("INNER_TOLERANCE"),
            "inner_max_iter": get("INNER_MAX_ITER"),
            "theta_start": get("THETA_START"),
            "theta_floor": get("THETA_FLOOR"),
            "covariance": get("COVARIANCE"),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)
