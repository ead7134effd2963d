"""Builders for small hand-made datasets used across the test modules."""

from pathlib import Path

from severity.datamodel import CRASH_TERMS, CrashRecord, Dataset, RoadProfile
from severity.simgen import GeneratorConfig, generate

CRASH_HEADER = (
    "crash_id,road_id,severity,lighting_night,pavement_adverse,geometry_curve,"
    "weather_adverse,driver_no_university,driver_under_30,driver_male"
)
ROAD_HEADER = "road_id,aadt,access_density,heavy_vehicle_ratio"


def road(road_id, aadt=8110.0, access=1.0, heavy=0.1):
    return RoadProfile(road_id, aadt, access, heavy)


def crash(index, road_id, severity, **flags):
    values = {term: 0 for term in CRASH_TERMS}
    values.update(flags)
    return CrashRecord(
        crash_id=f"C{index:06d}", road_id=road_id, severity=severity, **values
    )


def dataset(outcomes, roads=None):
    """
    ``outcomes`` maps road id to a list of severities (or of (severity,
    flags) pairs); every road gets a default profile unless ``roads`` is given.
    """
    records = []
    for road_id, rows in outcomes.items():
        for row in rows:
            severity, flags = row if isinstance(row, tuple) else (row, {})
            records.append(crash(len(records) + 1, road_id, severity, **flags))
    if roads is None:
        roads = {road_id: road(road_id) for road_id in outcomes}
    return Dataset(records=records, roads=roads)


def write_tables(directory, crash_lines, road_lines):
    directory = Path(directory)
    crashes = directory / "crashes.csv"
    roads = directory / "roads.csv"
    crashes.write_text("\n".join([CRASH_HEADER, *crash_lines]) + "\n", encoding="utf-8")
    roads.write_text("\n".join([ROAD_HEADER, *road_lines]) + "\n", encoding="utf-8")
    return crashes, roads


def random_intercept_data(seed, groups=20, per_group=30, beta0=-0.7, variance=0.84):
    config = GeneratorConfig(
        n_groups=groups,
        n_per_group=per_group,
        beta={"intercept": beta0},
        sigma={"intercept": variance**0.5},
        seed=seed,
    )
    return generate(config)
