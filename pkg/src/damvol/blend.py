"""Threshold-routed blending of a Ridge model (low volumes) and a forest (high volumes)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import forest as rf
from . import linmod
from .features import FeatureMatrix
from .metrics import r2, rmse
from .preprocess import quantile
from .ratingcurve import RatingCurve, detect_threshold, volume_at


@dataclass(frozen=True)
class GatePrediction:
    """Route on the low model's own prediction versus a volume threshold (MCM)."""
    threshold_mcm: float

    def __post_init__(self):
        if math.isnan(self.threshold_mcm) or self.threshold_mcm < 0:
            raise ValueError("threshold_mcm must be >= 0 (inf allowed)")


@dataclass(frozen=True)
class GaugeStage:
    """Route on the measured gauge stage versus a stage threshold (m)."""
    stage_threshold_m: float
    curve: RatingCurve | None = None

    def __post_init__(self):
        if not math.isfinite(self.stage_threshold_m):
            raise ValueError("stage threshold must be finite")


RoutingRule = Union[GatePrediction, GaugeStage]


@dataclass
class BlendModel:
    low_model: linmod.LinearFit
    high_model: rf.Forest
    routing: RoutingRule
    provenance: dict = field(default_factory=dict)

    @property
    def columns(self) -> tuple[str, ...]:
        return self.low_model.columns


def percentile_thresholds(volumes, percentiles) -> np.ndarray:
    """Volume percentiles (0-100) with the same interpolation as the quartiles."""
    v = np.asarray(volumes, dtype=float)
    if v.size == 0:
        raise ValueError("no volumes to take percentiles of")
    p = np.asarray(percentiles, dtype=float)
    if np.any((p <= 0) | (p >= 100)):
        raise ValueError("percentiles must lie in (0, 100)")
    return np.atleast_1d(quantile(v, p / 100.0))


def _regime_masks(train: FeatureMatrix, routing: RoutingRule):
    if isinstance(routing, GatePrediction):
        low = train.y < routing.threshold_mcm
    else:
        low = train.gauge < routing.stage_threshold_m
    return low, ~low


def fit_blend(train: FeatureMatrix, ridge_lambda: float, rf_params: rf.RfParams,
              routing: RoutingRule, per_regime: bool = False,
              provenance: dict | None = None, n_jobs: int = 1,
              submodels: tuple | None = None) -> BlendModel:
    """Fit both submodels and attach a routing rule.

    By default both models see the whole training set and the threshold only
    matters at prediction time. With ``per_regime`` the Ridge model trains on
    rows below the threshold and the forest on the rest. ``submodels`` lets a
    caller reuse an already-fitted (ridge, forest) pair.
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    if isinstance(routing, GaugeStage):
        if routing.curve is None:
            raise ValueError("gauge-stage routing needs a rating curve")
        if np.isnan(train.gauge).any():
            raise ValueError("gauge-stage routing needs gauge_stage on every training row")
    cols = train.columns
    if per_regime:
        low, high = _regime_masks(train, routing)
        if low.sum() < 2 or high.sum() < 1:
            raise ValueError("threshold leaves a regime with too few training rows")
        ridge = linmod.fit_ridge(train.X[low], train.y[low], ridge_lambda, cols)
        forest = rf.fit_forest(train.X[high], train.y[high], rf_params, cols, n_jobs)
    elif submodels is not None:
        ridge, forest = submodels
    else:
        ridge = linmod.fit_ridge(train.X, train.y, ridge_lambda, cols)
        forest = rf.fit_forest(train.X, train.y, rf_params, cols, n_jobs)
    prov = dict(provenance or {})
    prov.setdefault("per_regime", per_regime)
    return BlendModel(ridge, forest, routing, prov)


def route_low(m: BlendModel, X: FeatureMatrix, low_pred=None) -> np.ndarray:
    """Boolean mask of rows sent to the low (Ridge) model.

    The boundary value itself routes high. The gate is the Ridge prediction
    floored at zero (storage cannot be negative), so a zero threshold sends
    every row to the forest.
    """
    if isinstance(m.routing, GatePrediction):
        gate = linmod.predict(m.low_model, X.X) if low_pred is None else low_pred
        return np.maximum(gate, 0.0) < m.routing.threshold_mcm
    if np.isnan(X.gauge).any():
        bad = [d.isoformat() for d, g in zip(X.dates, X.gauge) if np.isnan(g)]
        raise ValueError(f"gauge-stage routing: rows without gauge_stage: {bad[:5]}")
    return X.gauge < m.routing.stage_threshold_m


def predict_blend(m: BlendModel, X: FeatureMatrix) -> np.ndarray:
    if tuple(X.columns) != tuple(m.columns):
        raise ValueError(f"feature schema {list(X.columns)} does not match model "
                         f"schema {list(m.columns)}")
    low_pred = linmod.predict(m.low_model, X.X)
    high_pred = rf.predict_forest(m.high_model, X.X)
    return np.where(route_low(m, X, low_pred), low_pred, high_pred)


def gauge_threshold_from_curve(c: RatingCurve, override_stage: float | None = None) -> tuple[GaugeStage, dict]:
    """Stage-routing rule from the rating curve's strongest slope increase."""
    if override_stage is not None:
        stage = float(override_stage)
        vol = float(volume_at(c, stage))
        prov = {"source": "rating_curve_override", "stage_m": stage, "volume_mcm": vol}
    else:
        stage, vol = detect_threshold(c)
        prov = {"source": "rating_curve", "stage_m": stage, "volume_mcm": vol}
    return GaugeStage(stage, c), prov


@dataclass(frozen=True)
class SweepRow:
    label: str
    threshold: float
    rmse: float
    r2: float
    routing: str
    best: bool = False

    def to_dict(self) -> dict:
        return {"label": self.label, "threshold": self.threshold, "rmse": self.rmse,
                "r2": self.r2, "routing": self.routing, "best": self.best}


def threshold_sweep(train: FeatureMatrix, test: FeatureMatrix, candidates,
                    ridge_lambda: float, rf_params: rf.RfParams,
                    per_regime: bool = False, n_jobs: int = 1) -> list[SweepRow]:
    """Evaluate one blend per candidate on ``test``; sorted by RMSE then threshold.

    ``candidates`` holds ``(label, rule)`` pairs, where ``rule`` is a routing
    rule or a bare number (a volume threshold for gate-prediction routing).
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no threshold candidates")
    shared = None
    if not per_regime:
        shared = (linmod.fit_ridge(train.X, train.y, ridge_lambda, train.columns),
                  rf.fit_forest(train.X, train.y, rf_params, train.columns, n_jobs))
    rows = []
    for label, rule in candidates:
        if not isinstance(rule, (GatePrediction, GaugeStage)):
            rule = GatePrediction(float(rule))
        m = fit_blend(train, ridge_lambda, rf_params, rule, per_regime,
                      n_jobs=n_jobs, submodels=shared)
        pred = predict_blend(m, test)
        if isinstance(rule, GatePrediction):
            thr, kind = rule.threshold_mcm, "gate_prediction"
        else:
            thr, kind = rule.stage_threshold_m, "gauge_stage"
        rows.append(SweepRow(str(label), float(thr), rmse(test.y, pred), r2(test.y, pred), kind))
    rows.sort(key=lambda r: (r.rmse, r.threshold))
    rows[0] = SweepRow(**{**rows[0].to_dict(), "best": True})
    return rows


def format_sweep(rows: list[SweepRow]) -> str:
    w = max(len("Threshold"), *(len(r.label) for r in rows))
    out = [f"{'Threshold':<{w}}  {'RMSE':>8}  {'R²':>6}", f"{'-' * w}  {'-' * 8}  {'-' * 6}"]
    for r in rows:
        flag = "  *best" if r.best else ""
        out.append(f"{r.label:<{w}}  {r.rmse:>8.3f}  {r.r2:>6.3f}{flag}")
    return "\n".join(out) + "\n"


def to_dict(m: BlendModel) -> dict:
    if isinstance(m.routing, GatePrediction):
        routing = {"rule": "gate_prediction", "threshold_mcm": m.routing.threshold_mcm}
    else:
        routing = {"rule": "gauge_stage", "stage_threshold_m": m.routing.stage_threshold_m,
                   "curve": m.routing.curve.to_dict() if m.routing.curve is not None else None}
    return {
        "kind": "blend",
        "low_model": linmod.to_dict(m.low_model),
        "high_model": rf.to_dict(m.high_model),
        "routing": routing,
        "threshold_provenance": m.provenance,
    }


def from_dict(d: dict) -> BlendModel:
    r = d["routing"]
    if r["rule"] == "gate_prediction":
        routing = GatePrediction(float(r["threshold_mcm"]))
    else:
        curve = RatingCurve.from_dict(r["curve"]) if r.get("curve") else None
        routing = GaugeStage(float(r["stage_threshold_m"]), curve)
    return BlendModel(linmod.from_dict(d["low_model"]), rf.from_dict(d["high_model"]),
                      routing, dict(d.get("threshold_provenance", {})))
