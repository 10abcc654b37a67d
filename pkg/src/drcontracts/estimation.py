"""Capability estimation from metered load data.

Pipeline: decompose each day's 24-hour load profile into reference end-use
shapes by non-negative least squares, take the curtailable fraction of the
HVAC component as the hourly curtailment-capability estimate, and pool the
estimates into calendar buckets (month, hour-of-day, weekday/weekend), each an
empirical distribution with a fitted normal alongside.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .distributions import (
    EmpiricalDistribution,
    NormalDistribution,
    fit_normal,
)
from .errors import InputFormatError, ModelConsistencyError
from .nnls import nnls

HOURS_PER_DAY = 24
DEFAULT_CURTAILABLE_FRACTION = 0.6
DEFAULT_MIN_BUCKET_SIZE = 4

MODEL_SCHEMA_VERSION = 1

LOAD_CSV_HEADER = ["timestamp", "building_id", "load_kwh"]
SHAPES_CSV_HEADER = ["end_use", "day_type", "hour", "weight"]
_DAY_TYPES = ("weekday", "weekend", "all")


@dataclass(frozen=True)
class LoadRecord:
    """One metered hour for one building."""

    timestamp: datetime
    building_id: str
    load_kwh: float

    def __post_init__(self) -> None:
        ts = self.timestamp
        if ts.minute or ts.second or ts.microsecond:
            raise ValueError(f"timestamps must be on the hour, got {ts.isoformat()}")
        if not self.building_id:
            raise ValueError("building_id must be non-empty")
        if not (np.isfinite(self.load_kwh) and self.load_kwh >= 0.0):
            raise ValueError(f"load_kwh must be finite and >= 0, got {self.load_kwh!r}")


@dataclass(frozen=True, order=True)
class BucketKey:
    """Calendar cell pooling capability estimates: month x hour x day type."""

    month: int
    hour: int
    is_weekend: bool

    def __post_init__(self) -> None:
        if not 1 <= self.month <= 12:
            raise ValueError(f"month must lie in 1..12, got {self.month}")
        if not 0 <= self.hour <= 23:
            raise ValueError(f"hour must lie in 0..23, got {self.hour}")

    @classmethod
    def from_timestamp(cls, ts: datetime) -> BucketKey:
        return cls(month=ts.month, hour=ts.hour, is_weekend=ts.weekday() >= 5)

    @property
    def label(self) -> str:
        day = "weekend" if self.is_weekend else "weekday"
        return f"{self.month:02d}-{self.hour:02d}-{day}"

    @classmethod
    def from_label(cls, label: str) -> BucketKey:
        parts = label.split("-")
        if len(parts) != 3 or parts[2] not in ("weekday", "weekend"):
            raise ValueError(f"malformed bucket label {label!r}")
        return cls(int(parts[0]), int(parts[1]), parts[2] == "weekend")


@dataclass(frozen=True, eq=False)
class EndUseShapes:
    """Reference hourly load shapes, one row per end use.

    weekday/weekend are (n_uses, 24) weight matrices in the order of ``names``.
    Exactly one end use is the curtailable one (HVAC in the source data).
    """

    names: tuple[str, ...]
    weekday: np.ndarray
    weekend: np.ndarray
    curtailable: str

    def __post_init__(self) -> None:
        names = tuple(str(n) for n in self.names)
        if not names:
            raise ValueError("need at least one end use")
        if len(set(names)) != len(names):
            raise ValueError("end-use names must be unique")
        if self.curtailable not in names:
            raise ValueError(
                f"curtailable end use {self.curtailable!r} not among {list(names)}"
            )
        k = len(names)
        for attr in ("weekday", "weekend"):
            mat = np.array(getattr(self, attr), dtype=float, copy=True)
            if mat.shape != (k, HOURS_PER_DAY):
                raise ValueError(f"{attr} matrix must be ({k}, 24), got {mat.shape}")
            if not np.all(np.isfinite(mat)) or np.min(mat) < 0.0:
                raise ValueError(f"{attr} weights must be finite and >= 0")
            zero_rows = np.where(~mat.any(axis=1))[0]
            if zero_rows.size:
                raise ValueError(
                    f"all-zero {attr} shape for end use {names[zero_rows[0]]!r}"
                )
            mat.flags.writeable = False
            object.__setattr__(self, attr, mat)
        object.__setattr__(self, "names", names)

    @property
    def curtailable_index(self) -> int:
        return self.names.index(self.curtailable)

    def day_matrix(self, is_weekend: bool) -> np.ndarray:
        """Design matrix (24, n_uses) for one day type."""
        mat = self.weekend if is_weekend else self.weekday
        return mat.T

    def curtailable_shape(self, is_weekend: bool) -> np.ndarray:
        mat = self.weekend if is_weekend else self.weekday
        return mat[self.curtailable_index]


def decompose_load(
    day_profile, shapes: EndUseShapes, is_weekend: bool = False
) -> tuple[np.ndarray, float]:
    """NNLS weights of the end-use shapes for one 24-hour profile."""
    profile = np.asarray(day_profile, dtype=float)
    if profile.shape != (HOURS_PER_DAY,):
        raise ValueError(f"day profile must have 24 hours, got shape {profile.shape}")
    if not np.all(np.isfinite(profile)) or np.min(profile) < 0.0:
        raise ValueError("day profile must be finite and >= 0")
    return nnls(shapes.day_matrix(is_weekend), profile)


@dataclass(frozen=True)
class CurtailableSeries:
    """Hourly curtailment-capability estimates for one building."""

    building_id: str
    times: tuple[datetime, ...]
    values: np.ndarray
    days_used: int
    skipped_days: int
    residual_norms: tuple[float, ...]

    @property
    def points(self) -> list[tuple[datetime, float]]:
        """(timestamp, curtailable kWh) pairs, one per estimated hour."""
        return list(zip(self.times, self.values.tolist()))


def curtailable_series(
    records: Iterable[LoadRecord], shapes: EndUseShapes, fraction: float
) -> CurtailableSeries:
    """Estimate hourly curtailable kWh from one building's load records.

    Only complete days (all 24 hours present) are decomposed; incomplete days
    are skipped and counted.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"curtailable fraction must lie in [0, 1], got {fraction!r}")
    records = sorted(records, key=lambda r: r.timestamp)
    if not records:
        raise ValueError("no load records given")
    buildings = {r.building_id for r in records}
    if len(buildings) != 1:
        raise ValueError(f"records span multiple buildings: {sorted(buildings)}")
    building_id = records[0].building_id

    by_day: dict = {}
    for rec in records:
        day = by_day.setdefault(rec.timestamp.date(), {})
        if rec.timestamp.hour in day:
            raise ValueError(f"duplicate timestamp {rec.timestamp.isoformat()}")
        day[rec.timestamp.hour] = rec.load_kwh

    ci = shapes.curtailable_index
    times: list[datetime] = []
    values: list[float] = []
    residuals: list[float] = []
    skipped = 0
    for day in sorted(by_day):
        hours = by_day[day]
        if len(hours) != HOURS_PER_DAY:
            skipped += 1
            continue
        profile = np.array([hours[h] for h in range(HOURS_PER_DAY)])
        is_weekend = day.weekday() >= 5
        weights, residual = decompose_load(profile, shapes, is_weekend)
        shape_c = shapes.curtailable_shape(is_weekend)
        day_q = fraction * weights[ci] * shape_c
        for h in range(HOURS_PER_DAY):
            times.append(datetime(day.year, day.month, day.day, h))
            values.append(float(day_q[h]))
        residuals.append(residual)

    return CurtailableSeries(
        building_id=building_id,
        times=tuple(times),
        values=np.asarray(values),
        days_used=len(residuals),
        skipped_days=skipped,
        residual_norms=tuple(residuals),
    )


def bucket(points: Iterable[tuple[datetime, float]]) -> dict[BucketKey, EmpiricalDistribution]:
    """Pool (timestamp, q) points into calendar buckets.

    Each bucket's empirical distribution carries the source timestamps as
    alignment labels, so buckets from different buildings can be realigned.
    """
    grouped: dict[BucketKey, list[tuple[str, float]]] = {}
    for ts, q in points:
        key = BucketKey.from_timestamp(ts)
        grouped.setdefault(key, []).append((ts.isoformat(), float(q)))
    out = {}
    for key, pairs in grouped.items():
        labels = tuple(lab for lab, _ in pairs)
        vals = np.array([v for _, v in pairs])
        out[key] = EmpiricalDistribution(vals, alignment=labels)
    return out


@dataclass(frozen=True)
class EstimationConfig:
    curtailable_fraction: float = DEFAULT_CURTAILABLE_FRACTION
    min_bucket_size: int = DEFAULT_MIN_BUCKET_SIZE
    curtailable_end_use: str = "hvac"

    def __post_init__(self) -> None:
        if not 0.0 <= self.curtailable_fraction <= 1.0:
            raise ValueError(
                f"curtailable_fraction must lie in [0, 1], got {self.curtailable_fraction!r}"
            )
        if int(self.min_bucket_size) != self.min_bucket_size or self.min_bucket_size < 2:
            raise ValueError(
                f"min_bucket_size must be an integer >= 2, got {self.min_bucket_size!r}"
            )
        if not self.curtailable_end_use:
            raise ValueError("curtailable_end_use must be non-empty")


@dataclass(frozen=True)
class BucketModel:
    """Estimated capability distribution for one calendar bucket."""

    empirical: EmpiricalDistribution
    normal: NormalDistribution
    fit_distance: float


@dataclass(frozen=True)
class BuildingModel:
    building_id: str
    buckets: Mapping[BucketKey, BucketModel]
    dropped_buckets: tuple[tuple[str, int], ...]
    days_used: int
    skipped_days: int

    def sorted_keys(self) -> list[BucketKey]:
        return sorted(self.buckets)


@dataclass(frozen=True)
class CapabilityModel:
    """Per-building bucket distributions plus provenance metadata."""

    buildings: Mapping[str, BuildingModel]
    curtailable_fraction: float
    curtailable_end_use: str
    min_bucket_size: int
    record_counts: Mapping[str, int]
    source_digest: str | None = None

    def building(self, building_id: str) -> BuildingModel:
        try:
            return self.buildings[building_id]
        except KeyError:
            raise ModelConsistencyError(
                f"unknown building {building_id!r}; model has {sorted(self.buildings)}"
            ) from None

    def to_json_dict(self) -> dict:
        buildings = {}
        for bid in sorted(self.buildings):
            bm = self.buildings[bid]
            buckets = {}
            for key in bm.sorted_keys():
                bucket_model = bm.buckets[key]
                emp = bucket_model.empirical
                buckets[key.label] = {
                    "samples": emp.samples.tolist(),
                    "alignment": list(emp.alignment) if emp.alignment else None,
                    "normal": {"mu": bucket_model.normal.mu, "sigma": bucket_model.normal.sigma},
                    "fit_distance": bucket_model.fit_distance,
                }
            buildings[bid] = {
                "days_used": bm.days_used,
                "skipped_days": bm.skipped_days,
                "dropped_buckets": [list(item) for item in bm.dropped_buckets],
                "buckets": buckets,
            }
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "metadata": {
                "curtailable_fraction": self.curtailable_fraction,
                "curtailable_end_use": self.curtailable_end_use,
                "min_bucket_size": self.min_bucket_size,
                "source_digest": self.source_digest,
                "record_counts": {k: self.record_counts[k] for k in sorted(self.record_counts)},
            },
            "buildings": buildings,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> CapabilityModel:
        try:
            version = obj["schema_version"]
            if version != MODEL_SCHEMA_VERSION:
                raise InputFormatError(
                    f"unsupported model schema version {version!r}"
                )
            meta = obj["metadata"]
            buildings = {}
            for bid, raw in obj["buildings"].items():
                buckets = {}
                for label, braw in raw["buckets"].items():
                    alignment = braw["alignment"]
                    emp = EmpiricalDistribution(
                        np.asarray(braw["samples"], dtype=float),
                        alignment=tuple(alignment) if alignment else None,
                    )
                    normal = NormalDistribution(
                        float(braw["normal"]["mu"]), float(braw["normal"]["sigma"])
                    )
                    buckets[BucketKey.from_label(label)] = BucketModel(
                        empirical=emp,
                        normal=normal,
                        fit_distance=float(braw["fit_distance"]),
                    )
                buildings[bid] = BuildingModel(
                    building_id=bid,
                    buckets=buckets,
                    dropped_buckets=tuple(
                        (str(lab), int(cnt)) for lab, cnt in raw["dropped_buckets"]
                    ),
                    days_used=int(raw["days_used"]),
                    skipped_days=int(raw["skipped_days"]),
                )
            return cls(
                buildings=buildings,
                curtailable_fraction=float(meta["curtailable_fraction"]),
                curtailable_end_use=str(meta["curtailable_end_use"]),
                min_bucket_size=int(meta["min_bucket_size"]),
                record_counts={k: int(v) for k, v in meta["record_counts"].items()},
                source_digest=meta.get("source_digest"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputFormatError):
                raise
            raise InputFormatError(f"malformed capability model: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(model_json_text(self))

    @classmethod
    def load(cls, path) -> CapabilityModel:
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputFormatError(f"cannot read capability model {path}: {exc}") from exc
        return cls.from_json_dict(obj)


def model_json_text(model: CapabilityModel) -> str:
    """Canonical serialization: identical models produce identical bytes."""
    return json.dumps(model.to_json_dict(), sort_keys=True, indent=1) + "\n"


def build_capability_model(
    records: Iterable[LoadRecord],
    shapes: EndUseShapes,
    config: EstimationConfig,
    source_digest: str | None = None,
) -> CapabilityModel:
    """Run the full estimation pipeline over all buildings in the records."""
    by_building: dict[str, list[LoadRecord]] = {}
    for rec in records:
        by_building.setdefault(rec.building_id, []).append(rec)
    if not by_building:
        raise ModelConsistencyError("no load records: no valid buckets")

    buildings = {}
    total_buckets = 0
    for bid in sorted(by_building):
        series = curtailable_series(
            by_building[bid], shapes, config.curtailable_fraction
        )
        raw_buckets = bucket(series.points)
        kept = {}
        dropped = []
        for key in sorted(raw_buckets):
            emp = raw_buckets[key]
            if emp.n < config.min_bucket_size:
                dropped.append((key.label, emp.n))
                continue
            normal, distance = fit_normal(emp)
            kept[key] = BucketModel(empirical=emp, normal=normal, fit_distance=distance)
        total_buckets += len(kept)
        buildings[bid] = BuildingModel(
            building_id=bid,
            buckets=kept,
            dropped_buckets=tuple(dropped),
            days_used=series.days_used,
            skipped_days=series.skipped_days,
        )
    if total_buckets == 0:
        raise ModelConsistencyError("no valid buckets after the minimum-size rule")
    return CapabilityModel(
        buildings=buildings,
        curtailable_fraction=config.curtailable_fraction,
        curtailable_end_use=config.curtailable_end_use,
        min_bucket_size=int(config.min_bucket_size),
        record_counts={bid: len(recs) for bid, recs in by_building.items()},
        source_digest=source_digest,
    )


def _parse_hour_timestamp(text: str, where: str) -> datetime:
    try:
        ts = datetime.fromisoformat(text)
    except ValueError as exc:
        raise InputFormatError(f"{where}: bad timestamp {text!r}: {exc}") from exc
    if ts.tzinfo is not None:
        raise InputFormatError(f"{where}: timestamps must be naive local time, got {text!r}")
    if ts.minute or ts.second or ts.microsecond:
        raise InputFormatError(f"{where}: timestamps must be on the hour, got {text!r}")
    return ts


def read_load_csv(path) -> list[LoadRecord]:
    """Parse the metered-load CSV (header: timestamp,building_id,load_kwh)."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputFormatError(f"cannot read load CSV {path}: {exc}") from exc
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise InputFormatError(f"{path}: empty file") from None
    if header != LOAD_CSV_HEADER:
        raise InputFormatError(
            f"{path}: expected header {','.join(LOAD_CSV_HEADER)}, got {','.join(header)}"
        )
    records = []
    seen: set[tuple[str, datetime]] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        where = f"{path}:{lineno}"
        if len(row) != 3:
            raise InputFormatError(f"{where}: expected 3 fields, got {len(row)}")
        ts = _parse_hour_timestamp(row[0], where)
        bid = row[1].strip()
        try:
            load = float(row[2])
        except ValueError:
            raise InputFormatError(f"{where}: bad load_kwh {row[2]!r}") from None
        key = (bid, ts)
        if key in seen:
            raise InputFormatError(
                f"{where}: duplicate timestamp {ts.isoformat()} for building {bid!r}"
            )
        seen.add(key)
        try:
            records.append(LoadRecord(timestamp=ts, building_id=bid, load_kwh=load))
        except ValueError as exc:
            raise InputFormatError(f"{where}: {exc}") from exc
    if not records:
        raise InputFormatError(f"{path}: no data rows")
    return records


def read_shapes_csv(path, curtailable: str) -> EndUseShapes:
    """Parse the end-use shapes CSV (header: end_use,day_type,hour,weight).

    An end use provides either a single 'all' shape or separate complete
    weekday and weekend shapes; mixing the two styles is rejected.
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InputFormatError(f"cannot read shapes CSV {path}: {exc}") from exc
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise InputFormatError(f"{path}: empty file") from None
    if header != SHAPES_CSV_HEADER:
        raise InputFormatError(
            f"{path}: expected header {','.join(SHAPES_CSV_HEADER)}, got {','.join(header)}"
        )
    vectors: dict[tuple[str, str], dict[int, float]] = {}
    order: list[str] = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        where = f"{path}:{lineno}"
        if len(row) != 4:
            raise InputFormatError(f"{where}: expected 4 fields, got {len(row)}")
        name, day_type, hour_text, weight_text = (f.strip() for f in row)
        if day_type not in _DAY_TYPES:
            raise InputFormatError(
                f"{where}: day_type must be one of {_DAY_TYPES}, got {day_type!r}"
            )
        try:
            hour = int(hour_text)
        except ValueError:
            raise InputFormatError(f"{where}: bad hour {hour_text!r}") from None
        if not 0 <= hour <= 23:
            raise InputFormatError(f"{where}: hour must lie in 0..23, got {hour}")
        try:
            weight = float(weight_text)
        except ValueError:
            raise InputFormatError(f"{where}: bad weight {weight_text!r}") from None
        if not (np.isfinite(weight) and weight >= 0.0):
            raise InputFormatError(f"{where}: weight must be finite and >= 0")
        if name not in order:
            order.append(name)
        vec = vectors.setdefault((name, day_type), {})
        if hour in vec:
            raise InputFormatError(
                f"{where}: duplicate hour {hour} for ({name!r}, {day_type!r})"
            )
        vec[hour] = weight

    def complete(name: str, day_type: str) -> np.ndarray:
        vec = vectors[(name, day_type)]
        missing = [h for h in range(HOURS_PER_DAY) if h not in vec]
        if missing:
            raise InputFormatError(
                f"{path}: ({name!r}, {day_type!r}) missing hours {missing[:4]}"
            )
        return np.array([vec[h] for h in range(HOURS_PER_DAY)])

    weekday_rows = []
    weekend_rows = []
    for name in order:
        has_all = (name, "all") in vectors
        has_specific = (name, "weekday") in vectors or (name, "weekend") in vectors
        if has_all and has_specific:
            raise InputFormatError(
                f"{path}: end use {name!r} mixes 'all' with weekday/weekend rows"
            )
        if has_all:
            vec = complete(name, "all")
            weekday_rows.append(vec)
            weekend_rows.append(vec)
        else:
            if (name, "weekday") not in vectors or (name, "weekend") not in vectors:
                raise InputFormatError(
                    f"{path}: end use {name!r} needs both weekday and weekend shapes "
                    "(or a single 'all' shape)"
                )
            weekday_rows.append(complete(name, "weekday"))
            weekend_rows.append(complete(name, "weekend"))
    if not order:
        raise InputFormatError(f"{path}: no shape rows")
    try:
        return EndUseShapes(
            names=tuple(order),
            weekday=np.vstack(weekday_rows),
            weekend=np.vstack(weekend_rows),
            curtailable=curtailable,
        )
    except ValueError as exc:
        raise InputFormatError(f"{path}: {exc}") from exc
