"""Pinned synthetic reservoir used by the demos and the acceptance suite.

Storage follows seasonal and multi-year cycles. Gauge stage comes from a
Loskop-style rating curve whose slope jumps at 22.2 m / 244 MCM. Surface
area grows concavely with storage and flattens once the reservoir passes
full supply (about 1500 ha), so the area -> volume law changes regime there.
The raw CSV also carries -9.9 sentinel rows and a few cloud-contaminated
area outliers, so the cleaning steps have something to remove.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from datetime import date, timedelta

import numpy as np

from .ratingcurve import RatingCurve, build_curve, stage_at

LOSKOP_PROFILE_KNOTS = ((0.0, 0.0), (8.0, 85.0), (15.0, 165.0), (22.2, 244.0), (30.0, 420.0))


def loskop_profile_curve() -> RatingCurve:
    return build_curve(LOSKOP_PROFILE_KNOTS)


@dataclass(frozen=True)
class ReservoirParams:
    seed: int = 20240607
    n_records: int = 880
    start: date = date(2012, 1, 1)
    step_days: int = 5
    mean_volume: float = 170.0
    seasonal_amp: float = 70.0
    multiyear_amp: float = 50.0
    ar_sd: float = 6.0
    # late-record drought, deeper than anything earlier in the series
    drought_depth: float = 60.0
    drought_center: float = 0.92  # fraction of the record
    drought_width: float = 0.05
    full_supply_volume: float = 244.0
    full_supply_area: float = 1500.0
    area_exponent: float = 0.7
    saturation_area: float = 60.0   # extra ha reachable above full supply
    saturation_scale: float = 60.0  # MCM
    area_noise_sd: float = 20.0
    stage_noise_sd: float = 0.15
    volume_noise_sd: float = 1.0
    inflow_elevation: float = 1012.0
    outflow_elevation: float = 985.0
    river_distance: float = 24000.0
    n_sentinels: int = 12
    n_area_outliers: int = 8


def area_from_volume(v, p: ReservoirParams = ReservoirParams()):
    """Concave storage -> area law with a kink at full supply."""
    v = np.asarray(v, dtype=float)
    below = p.full_supply_area * np.power(np.clip(v, 0, None) / p.full_supply_volume,
                                          p.area_exponent)
    above = p.full_supply_area + p.saturation_area * (
        1.0 - np.exp(-(v - p.full_supply_volume) / p.saturation_scale))
    return np.where(v < p.full_supply_volume, below, above)


def _volume_series(p: ReservoirParams, rng) -> np.ndarray:
    t = np.arange(p.n_records) * p.step_days
    ar = np.zeros(p.n_records)
    for i in range(1, p.n_records):
        ar[i] = 0.9 * ar[i - 1] + rng.normal(0, p.ar_sd)
    span = t[-1]
    drought = p.drought_depth * np.exp(-0.5 * ((t - p.drought_center * span)
                                               / (p.drought_width * span)) ** 2)
    v = (p.mean_volume
         + p.seasonal_amp * np.sin(2 * np.pi * t / 365.25)
         + p.multiyear_amp * np.sin(2 * np.pi * t / (4.3 * 365.25) + 1.0)
         - drought
         + ar)
    return np.clip(v, 12.0, 410.0)


def generate_rows(p: ReservoirParams = ReservoirParams()) -> list[dict]:
    """Raw rows (including sentinels and outliers) as dicts of CSV strings."""
    rng = np.random.default_rng(p.seed)
    curve = loskop_profile_curve()
    vol = _volume_series(p, rng)
    stage = stage_at(curve, vol) + rng.normal(0, p.stage_noise_sd, vol.size)
    area = area_from_volume(vol, p) + rng.normal(0, p.area_noise_sd, vol.size)
    obs_vol = vol + rng.normal(0, p.volume_noise_sd, vol.size)

    rows = []
    for i in range(p.n_records):
        rows.append({
            "date": (p.start + timedelta(days=i * p.step_days)).isoformat(),
            "area_ha": f"{area[i]:.2f}",
            "gauge_m": f"{stage[i]:.3f}",
            "volume_mcm": f"{obs_vol[i]:.3f}",
            "inflow_elev_m": f"{p.inflow_elevation:.2f}",
            "outflow_elev_m": f"{p.outflow_elevation:.2f}",
            "river_dist_m": f"{p.river_distance:.1f}",
        })
    picks = rng.choice(p.n_records, size=p.n_sentinels + p.n_area_outliers, replace=False)
    fields = ["volume_mcm", "gauge_m", "area_ha"]
    for j, i in enumerate(picks[:p.n_sentinels]):
        rows[i][fields[j % len(fields)]] = "-9.9"
    for i in picks[p.n_sentinels:]:
        rows[i]["area_ha"] = f"{float(rng.uniform(4000, 9000)):.2f}"
    return rows


SCHEMA = {
    "water_area": "area_ha",
    "gauge_stage": "gauge_m",
    "volume": "volume_mcm",
    "inflow_elevation": "inflow_elev_m",
    "outflow_elevation": "outflow_elev_m",
    "river_distance": "river_dist_m",
}


def to_csv_text(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def write_csv(path, p: ReservoirParams = ReservoirParams()) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv_text(generate_rows(p)))
