"""The four nested feature renditions and the feature matrix builder."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .ingest import Dataset, ObservationRecord

LOSKOP_FULL_SUPPLY_ELEVATION = 999.38  # m
DEFAULT_AREA_THRESHOLD = 1500.0  # ha


@dataclass(frozen=True)
class FeatureRendition:
    name: str
    features: tuple[str, ...]


_BASE = ("water_area",)
_CAPACITY = _BASE + ("full_supply_indicator",)
_GEO = _CAPACITY + ("inflow_elevation", "outflow_elevation", "vertical_drop",
                    "river_distance", "slope")
_ELEVATION = _GEO + ("full_supply_elevation", "fse_headroom")

RENDITIONS = {
    "base": FeatureRendition("base", _BASE),
    "full_capacity": FeatureRendition("full_capacity", _CAPACITY),
    "geographical": FeatureRendition("geographical", _GEO),
    "full_elevation": FeatureRendition("full_elevation", _ELEVATION),
}
RENDITION_ORDER = tuple(RENDITIONS)


@dataclass(frozen=True)
class FeatureParams:
    area_threshold: float = DEFAULT_AREA_THRESHOLD
    full_supply_elevation: float = LOSKOP_FULL_SUPPLY_ELEVATION
    # water-surface elevation = gauge_datum + gauge_stage
    gauge_datum: float = 0.0
    # optional constant column for the design capacity (MCM); None disables it
    full_supply_capacity: float | None = None

    @classmethod
    def from_dict(cls, d: dict | None) -> FeatureParams:
        return cls(**(d or {}))


@dataclass(frozen=True)
class FeatureMatrix:
    columns: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    dates: tuple[date, ...]
    gauge: np.ndarray  # NaN where the record had no gauge reading
    rendition: str = ""
    dropped: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.X.shape[0]

    def take(self, idx) -> FeatureMatrix:
        idx = np.asarray(idx)
        dates = tuple(np.asarray(self.dates, dtype=object)[idx])
        return FeatureMatrix(self.columns, self.X[idx], self.y[idx], dates,
                             self.gauge[idx], self.rendition, dict(self.dropped))


def get_rendition(name: str) -> FeatureRendition:
    try:
        return RENDITIONS[name]
    except KeyError:
        raise ValueError(f"unknown rendition {name!r}; valid: {', '.join(RENDITIONS)}") from None


def full_supply_indicator(water_area, area_threshold: float = DEFAULT_AREA_THRESHOLD):
    """1 where the water area reaches the full-supply area threshold, else 0."""
    if area_threshold <= 0:
        raise ValueError("area_threshold must be positive")
    out = (np.asarray(water_area, dtype=float) >= area_threshold).astype(float)
    return float(out) if out.ndim == 0 else out


def geo_features(inflow_elevation, outflow_elevation, river_distance):
    """Return ``(vertical_drop, slope)`` between inflow and outflow points."""
    inflow = np.asarray(inflow_elevation, dtype=float)
    outflow = np.asarray(outflow_elevation, dtype=float)
    dist = np.asarray(river_distance, dtype=float)
    if np.any(dist <= 0):
        raise ValueError("river_distance must be positive")
    drop = inflow - outflow
    slope = drop / dist
    if drop.ndim == 0:
        return float(drop), float(slope)
    return drop, slope


def full_supply_elevation_feature(surface_elevation,
                                  full_supply_elevation: float = LOSKOP_FULL_SUPPLY_ELEVATION):
    """Headroom below full supply elevation; negative above it."""
    out = full_supply_elevation - np.asarray(surface_elevation, dtype=float)
    return float(out) if out.ndim == 0 else out


_NEEDS = {
    "water_area": ("water_area",),
    "full_supply_indicator": ("water_area",),
    "inflow_elevation": ("inflow_elevation",),
    "outflow_elevation": ("outflow_elevation",),
    "vertical_drop": ("inflow_elevation", "outflow_elevation"),
    "river_distance": ("river_distance",),
    "slope": ("inflow_elevation", "outflow_elevation", "river_distance"),
    "full_supply_elevation": (),
    "fse_headroom": ("gauge_stage",),
}


def _required_fields(rendition: FeatureRendition) -> tuple[str, ...]:
    needed = []
    for feat in rendition.features:
        for f in _NEEDS[feat]:
            if f not in needed:
                needed.append(f)
    return tuple(needed)


def _row(rec: ObservationRecord, rendition: FeatureRendition, params: FeatureParams) -> list[float]:
    row = []
    for feat in rendition.features:
        if feat == "water_area":
            row.append(rec.water_area)
        elif feat == "full_supply_indicator":
            row.append(full_supply_indicator(rec.water_area, params.area_threshold))
        elif feat in ("inflow_elevation", "outflow_elevation", "river_distance"):
            row.append(getattr(rec, feat))
        elif feat == "vertical_drop":
            row.append(rec.inflow_elevation - rec.outflow_elevation)
        elif feat == "slope":
            row.append(geo_features(rec.inflow_elevation, rec.outflow_elevation,
                                    rec.river_distance)[1])
        elif feat == "full_supply_elevation":
            row.append(params.full_supply_elevation)
        elif feat == "fse_headroom":
            row.append(full_supply_elevation_feature(params.gauge_datum + rec.gauge_stage,
                                                     params.full_supply_elevation))
    if params.full_supply_capacity is not None and "full_supply_indicator" in rendition.features:
        row.append(float(params.full_supply_capacity))
    return row


def columns_for(rendition: FeatureRendition, params: FeatureParams) -> tuple[str, ...]:
    cols = rendition.features
    if params.full_supply_capacity is not None and "full_supply_indicator" in cols:
        cols = cols + ("full_supply_capacity",)
    return cols


def assemble(ds: Dataset, rendition: FeatureRendition | str,
             params: FeatureParams | None = None) -> FeatureMatrix:
    """Build the feature matrix for ``rendition``.

    Records missing a needed optional field are dropped and counted. A
    dataset where a needed field is absent on every record is an error.
    """
    if isinstance(rendition, str):
        rendition = get_rendition(rendition)
    params = params or FeatureParams()
    needed = _required_fields(rendition)
    if len(ds):
        absent = [f for f in needed if all(getattr(r, f) is None for r in ds.records)]
        if absent:
            raise ValueError(f"rendition {rendition.name!r} needs field(s) missing from the "
                             f"dataset: {', '.join(absent)}")
    rows, targets, dates, gauge = [], [], [], []
    dropped = {}
    for rec in ds.records:
        missing = [f for f in needed if getattr(rec, f) is None]
        if missing:
            for f in missing:
                dropped[f] = dropped.get(f, 0) + 1
            continue
        rows.append(_row(rec, rendition, params))
        targets.append(rec.volume)
        dates.append(rec.date)
        gauge.append(np.nan if rec.gauge_stage is None else rec.gauge_stage)
    cols = columns_for(rendition, params)
    X = np.array(rows, dtype=float).reshape(len(rows), len(cols))
    return FeatureMatrix(cols, X, np.array(targets, dtype=float), tuple(dates),
                         np.array(gauge, dtype=float), rendition.name, dropped)
