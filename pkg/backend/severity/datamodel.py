"""
Dataset schema for road-nested crash records, CSV ingestion, design-matrix
encoding and reproducible train/test splits.

Crash-level covariates are 0/1 flags. Weather follows the source coding
"Clear weather (0=Yes, 1=No)", so ``weather_adverse = 1`` means not clear.
Road-level covariates are broadcast to every crash on the road; AADT enters
the model as its natural logarithm (``log_aadt``).
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from types import MappingProxyType

import numpy as np
import pandas as pd

from . import artifacts, errors

logger = logging.getLogger(__name__)

INTERCEPT = "intercept"

CRASH_COLUMNS = (
    "crash_id",
    "road_id",
    "severity",
    "lighting_night",
    "pavement_adverse",
    "geometry_curve",
    "weather_adverse",
    "driver_no_university",
    "driver_under_30",
    "driver_male",
)
ROAD_COLUMNS = ("road_id", "aadt", "access_density", "heavy_vehicle_ratio")

CRASH_TERMS = CRASH_COLUMNS[3:]
ROAD_TERMS = ("log_aadt", "access_density", "heavy_vehicle_ratio")
TERMS = CRASH_TERMS + ROAD_TERMS

TERM_ALIASES = {
    "light": "lighting_night",
    "lighting": "lighting_night",
    "pavement": "pavement_adverse",
    "geometry": "geometry_curve",
    "weather": "weather_adverse",
    "education": "driver_no_university",
    "age": "driver_under_30",
    "gender": "driver_male",
    "aadt": "log_aadt",
    "access": "access_density",
    "heavy": "heavy_vehicle_ratio",
    "heavy_vehicles": "heavy_vehicle_ratio",
}

MISSING_TOKENS = frozenset({"", "NA", "NaN", "nan", "null"})


def resolve_term(name):
    """Map a term name or alias to its canonical column name"""
    key = str(name).strip()
    canonical = TERM_ALIASES.get(key, key)
    if canonical not in TERMS:
        raise errors.UnknownTerm(key)
    return canonical


def parse_terms(text):
    """Split a comma-separated term list, resolving aliases"""
    if not text:
        return ()
    if isinstance(text, str):
        text = text.split(",")
    return tuple(resolve_term(t) for t in text if str(t).strip())


@dataclass(frozen=True)
class CrashRecord:
    crash_id: str
    road_id: str
    severity: int
    lighting_night: int
    pavement_adverse: int
    geometry_curve: int
    weather_adverse: int
    driver_no_university: int
    driver_under_30: int
    driver_male: int


@dataclass(frozen=True)
class RoadProfile:
    road_id: str
    aadt: float
    access_density: float
    heavy_vehicle_ratio: float

    @property
    def log_aadt(self):
        return math.log(self.aadt)


@dataclass(frozen=True)
class Dataset:
    records: tuple
    roads: MappingProxyType
    dropped_rows: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not isinstance(self.roads, MappingProxyType):
            object.__setattr__(self, "roads", MappingProxyType(dict(self.roads)))
        for line, record in enumerate(self.records, start=2):
            if record.road_id not in self.roads:
                raise errors.UnresolvedRoadId("<dataset>", line, record.road_id)

    @property
    def n(self):
        return len(self.records)

    @property
    def road_ids(self):
        return tuple(self.roads)

    @property
    def J(self):
        return len(self.roads)

    def crash_frame(self):
        return pd.DataFrame(
            [[getattr(r, c) for c in CRASH_COLUMNS] for r in self.records],
            columns=list(CRASH_COLUMNS),
        )

    def road_frame(self):
        return pd.DataFrame(
            [[getattr(p, c) for c in ROAD_COLUMNS] for p in self.roads.values()],
            columns=list(ROAD_COLUMNS),
        )


@dataclass(frozen=True)
class ModelSpec:
    fixed_terms: tuple = ()
    random_intercept: bool = False
    random_slope_terms: tuple = ()
    link: str = "logit"

    def __post_init__(self):
        fixed = tuple(resolve_term(t) for t in self.fixed_terms)
        slopes = tuple(resolve_term(t) for t in self.random_slope_terms)
        if len(set(fixed)) != len(fixed):
            raise errors.InvalidModelSpec(f"Duplicate fixed terms in {fixed}")
        if len(set(slopes)) != len(slopes):
            raise errors.InvalidModelSpec(f"Duplicate random slopes in {slopes}")
        missing = [t for t in slopes if t not in fixed]
        if missing:
            raise errors.InvalidModelSpec(
                f"Random slopes must also be fixed terms: {', '.join(missing)}"
            )
        if slopes and not self.random_intercept:
            raise errors.InvalidModelSpec(
                "Random slopes require a random intercept"
            )
        if self.link != "logit":
            raise errors.InvalidModelSpec(f"Unsupported link '{self.link}'")
        object.__setattr__(self, "fixed_terms", fixed)
        object.__setattr__(self, "random_slope_terms", slopes)

    @property
    def is_mixed(self):
        return self.random_intercept

    @property
    def column_names(self):
        return (INTERCEPT,) + self.fixed_terms

    @property
    def random_names(self):
        if not self.random_intercept:
            return ()
        return (INTERCEPT,) + self.random_slope_terms

    @classmethod
    def preset(cls, name, terms=(), slopes=()):
        terms = parse_terms(terms)
        slopes = parse_terms(slopes)
        if name == "glm":
            return cls(fixed_terms=terms)
        if name == "null":
            return cls(random_intercept=True)
        if name == "ri":
            return cls(fixed_terms=terms, random_intercept=True)
        if name == "rc":
            if not slopes:
                raise errors.InvalidModelSpec("The rc model needs random slopes")
            return cls(fixed_terms=terms, random_intercept=True, random_slope_terms=slopes)
        raise errors.InvalidModelSpec(f"Unknown model '{name}'")

    def to_dict(self):
        return {
            "fixed_terms": list(self.fixed_terms),
            "random_intercept": self.random_intercept,
            "random_slope_terms": list(self.random_slope_terms),
            "link": self.link,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            fixed_terms=tuple(data.get("fixed_terms", ())),
            random_intercept=bool(data.get("random_intercept", False)),
            random_slope_terms=tuple(data.get("random_slope_terms", ())),
            link=data.get("link", "logit"),
        )


@dataclass(frozen=True, eq=False)
class DesignMatrices:
    y: np.ndarray
    X: np.ndarray
    group_index: np.ndarray
    z_cols: tuple
    n: int
    J: int
    p: int
    column_names: tuple
    group_keys: tuple
    spec: ModelSpec

    def __post_init__(self):
        if self.X.shape != (self.n, self.p) or self.y.shape != (self.n,):
            raise errors.DimensionMismatch(
                f"Design shapes disagree: X {self.X.shape}, y {self.y.shape}"
            )
        if self.group_index.shape != (self.n,):
            raise errors.DimensionMismatch("group_index must have one entry per row")
        if self.n and not np.all(self.X[:, 0] == 1.0):
            raise errors.DimensionMismatch("Column 0 of X must be the intercept")
        if any(c < 1 or c >= self.p for c in self.z_cols):
            raise errors.DimensionMismatch(f"Invalid random-slope columns {self.z_cols}")
        if self.J < 1 or len(self.group_keys) != self.J:
            raise errors.DimensionMismatch("Group keys must list every group")
        if self.n and (self.group_index.min() < 0 or self.group_index.max() >= self.J):
            raise errors.DimensionMismatch("Group index out of range")

    @property
    def q(self):
        return 1 + len(self.z_cols)

    @property
    def Z(self):
        """Random-effect rows: a leading 1, then the random-slope covariates"""
        return np.column_stack([np.ones(self.n), self.X[:, list(self.z_cols)]])

    def group_sizes(self):
        return np.bincount(self.group_index, minlength=self.J)


def _check_columns(path, frame, expected):
    missing = [c for c in expected if c not in frame.columns]
    if missing:
        raise errors.MissingColumn(path, missing)
    extra = [c for c in frame.columns if c not in expected]
    if extra:
        logger.warning("%s: ignoring extra column(s) %s", path, ", ".join(extra))


def _read_table(path, expected):
    path = Path(path)
    if not path.is_file():
        raise errors.DataFileNotFound(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise errors.UnreadableFile(path, exc) from exc
    frame.columns = [str(c).strip() for c in frame.columns]
    _check_columns(path, frame, expected)
    return path, frame[list(expected)].apply(lambda col: col.str.strip())


def _parse_binary(path, line, column, value):
    if value in ("0", "1"):
        return int(value)
    raise errors.InvalidBinaryValue(path, line, column, value)


def _parse_float(path, line, column, value):
    try:
        number = float(value)
    except ValueError:
        raise errors.InvalidRoadValue(
            path, line, f"{column} is not a number: '{value}'"
        ) from None
    if not math.isfinite(number):
        raise errors.InvalidRoadValue(path, line, f"{column} must be finite")
    return number


def _load_roads(path):
    path, frame = _read_table(path, ROAD_COLUMNS)
    roads, dropped, dropped_lines = {}, set(), []
    for line, row in enumerate(frame.itertuples(index=False), start=2):
        if any(getattr(row, c) in MISSING_TOKENS for c in ROAD_COLUMNS):
            dropped_lines.append(line)
            if row.road_id not in MISSING_TOKENS:
                dropped.add(row.road_id)
            continue
        if row.road_id in roads:
            raise errors.InvalidRoadValue(path, line, f"duplicate road_id '{row.road_id}'")
        aadt = _parse_float(path, line, "aadt", row.aadt)
        if aadt <= 0:
            raise errors.NonPositiveAadt(path, line, row.aadt)
        access = _parse_float(path, line, "access_density", row.access_density)
        if access < 0:
            raise errors.InvalidRoadValue(path, line, "access_density must be >= 0")
        heavy = _parse_float(path, line, "heavy_vehicle_ratio", row.heavy_vehicle_ratio)
        if not 0.0 <= heavy <= 1.0:
            raise errors.InvalidRoadValue(
                path, line, "heavy_vehicle_ratio must lie in [0, 1]"
            )
        roads[row.road_id] = RoadProfile(row.road_id, aadt, access, heavy)
    if dropped_lines:
        logger.debug("%s: dropped incomplete lines %s", path, dropped_lines)
    return roads, dropped, len(dropped_lines)


def _load_crashes(path, roads, dropped_roads):
    path, frame = _read_table(path, CRASH_COLUMNS)
    records, dropped_lines, seen = [], [], set()
    for line, row in enumerate(frame.itertuples(index=False), start=2):
        if any(getattr(row, c) in MISSING_TOKENS for c in CRASH_COLUMNS):
            dropped_lines.append(line)
            continue
        if row.crash_id in seen:
            raise errors.RowError(path, line, f"duplicate crash_id '{row.crash_id}'")
        seen.add(row.crash_id)
        if row.road_id not in roads:
            if row.road_id in dropped_roads:
                dropped_lines.append(line)
                continue
            raise errors.UnresolvedRoadId(path, line, row.road_id)
        flags = {c: _parse_binary(path, line, c, getattr(row, c)) for c in CRASH_COLUMNS[2:]}
        records.append(CrashRecord(crash_id=row.crash_id, road_id=row.road_id, **flags))
    if dropped_lines:
        logger.debug("%s: dropped incomplete lines %s", path, dropped_lines)
    return records, len(dropped_lines)


def load_dataset(crash_csv_path, road_csv_path):
    """
    Read and validate a crash table and its companion road table.

    Rows with a missing value are dropped and counted, never imputed; crashes
    on a road whose row was dropped go with it. Any other malformed value
    raises an error naming the file and line.
    """
    roads, dropped_roads, dropped_road_rows = _load_roads(road_csv_path)
    records, dropped_crash_rows = _load_crashes(crash_csv_path, roads, dropped_roads)
    dropped = dropped_road_rows + dropped_crash_rows
    dataset = Dataset(records=records, roads=roads, dropped_rows=dropped)
    logger.info(
        "Loaded %d crashes on %d roads (%d incomplete rows dropped)",
        dataset.n,
        dataset.J,
        dropped,
    )
    return dataset


def write_dataset(dataset, crash_csv_path, road_csv_path):
    artifacts.write_frame(road_csv_path, dataset.road_frame())
    artifacts.write_frame(crash_csv_path, dataset.crash_frame())


def _road_column(dataset, term, center):
    values = {key: getattr(road, term) for key, road in dataset.roads.items()}
    if center:
        mean = float(np.mean(list(values.values())))
        values = {key: value - mean for key, value in values.items()}
    return np.array([values[r.road_id] for r in dataset.records], dtype=float)


def encode_design(dataset, model_spec, center_road_covariates=False):
    """
    Build the response vector, fixed-effects matrix and group index.

    Column order is the intercept followed by ``model_spec.fixed_terms``.
    Groups follow the road table order, so partitions that share a road table
    share group ordinals. With ``center_road_covariates`` the road-level
    columns are centered at their mean across roads.
    """
    if dataset.n == 0:
        raise errors.EmptyDataset("Cannot encode an empty dataset")
    for term in model_spec.fixed_terms:
        resolve_term(term)

    records = dataset.records
    columns = [np.ones(dataset.n)]
    for term in model_spec.fixed_terms:
        if term in ROAD_TERMS:
            columns.append(_road_column(dataset, term, center_road_covariates))
        else:
            columns.append(np.array([getattr(r, term) for r in records], dtype=float))

    group_keys = dataset.road_ids
    ordinal = {key: j for j, key in enumerate(group_keys)}
    column_names = model_spec.column_names
    return DesignMatrices(
        y=np.array([r.severity for r in records], dtype=float),
        X=np.column_stack(columns),
        group_index=np.array([ordinal[r.road_id] for r in records], dtype=np.intp),
        z_cols=tuple(column_names.index(t) for t in model_spec.random_slope_terms),
        n=dataset.n,
        J=len(group_keys),
        p=len(column_names),
        column_names=column_names,
        group_keys=group_keys,
        spec=model_spec,
    )


def split(dataset, train_fraction, seed):
    """
    Crash-level random split; both partitions keep the full road table.

    The first ``floor(n * train_fraction)`` positions of a seeded permutation
    form the training set; each partition keeps the original record order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise errors.DegenerateSplit(
            f"train_fraction must lie strictly between 0 and 1, got {train_fraction}"
        )
    n_train = math.floor(Fraction(str(train_fraction)) * dataset.n)
    if n_train == 0 or n_train == dataset.n:
        raise errors.DegenerateSplit(
            f"Splitting {dataset.n} records at {train_fraction} leaves a partition empty"
        )
    rng = np.random.default_rng(int(seed) % 2**64)
    order = rng.permutation(dataset.n)
    train_rows = np.sort(order[:n_train])
    test_rows = np.sort(order[n_train:])
    train = Dataset(records=[dataset.records[i] for i in train_rows], roads=dataset.roads)
    test = Dataset(records=[dataset.records[i] for i in test_rows], roads=dataset.roads)
    logger.info("Split %d records into %d train / %d test", dataset.n, train.n, test.n)
    return train, test
