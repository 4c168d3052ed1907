"""RMSE / R², residuals by volume range, and ordered model comparison reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from .preprocess import quantile


def _pair(observed, predicted):
    obs = np.asarray(observed, dtype=float).ravel()
    pred = np.asarray(predicted, dtype=float).ravel()
    if obs.shape != pred.shape:
        raise ValueError(f"length mismatch: {obs.size} observed vs {pred.size} predicted")
    if obs.size == 0:
        raise ValueError("empty input")
    if not (np.all(np.isfinite(obs)) and np.all(np.isfinite(pred))):
        raise ValueError("non-finite values")
    return obs, pred


def rmse(observed, predicted) -> float:
    obs, pred = _pair(observed, predicted)
    return float(np.sqrt(np.mean((obs - pred) ** 2)))


def r2(observed, predicted) -> float:
    """Coefficient of determination about the mean of ``observed``."""
    obs, pred = _pair(observed, predicted)
    if obs.size < 2:
        raise ValueError("R² needs at least 2 points")
    sst = np.sum((obs - obs.mean()) ** 2)
    if sst == 0:
        raise ValueError("R² undefined: observed values are constant")
    return float(1.0 - np.sum((obs - pred) ** 2) / sst)


@dataclass
class EvalResult:
    name: str
    rmse: float
    r2: float
    n: int
    dates: tuple = ()
    observed: np.ndarray = field(default_factory=lambda: np.empty(0))
    predicted: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def residuals(self) -> np.ndarray:
        return self.observed - self.predicted


def evaluate(name: str, observed, predicted, dates=()) -> EvalResult:
    obs, pred = _pair(observed, predicted)
    return EvalResult(name, rmse(obs, pred), r2(obs, pred), obs.size, tuple(dates), obs, pred)


@dataclass(frozen=True)
class ResidualBins:
    edges: np.ndarray
    mean_residual: np.ndarray
    mean_abs_residual: np.ndarray
    count: np.ndarray

    def to_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "mean_residual": self.mean_residual.tolist(),
            "mean_abs_residual": self.mean_abs_residual.tolist(),
            "count": self.count.tolist(),
        }


def default_edges(observed) -> np.ndarray:
    """Quartile edges (min, q1, median, q3, max) with duplicates collapsed.

    Constant input gets one unit-width bin starting at that value.
    """
    edges = np.unique(quantile(observed, [0.0, 0.25, 0.5, 0.75, 1.0]))
    if edges.size == 1:
        edges = np.array([edges[0], edges[0] + 1.0])
    return edges


def residual_bins(observed, predicted, edges=None) -> ResidualBins:
    """Group residuals (observed - predicted) by observed volume.

    Bins are half-open ``[e_i, e_{i+1})`` except the last, which is closed.
    Empty bins report NaN means.
    """
    obs, pred = _pair(observed, predicted)
    edges = default_edges(obs) if edges is None else np.asarray(edges, dtype=float)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing with at least 2 entries")
    if obs.min() < edges[0] or obs.max() > edges[-1]:
        raise ValueError(f"observed values outside bin coverage [{edges[0]}, {edges[-1]}]")
    idx = np.clip(np.searchsorted(edges, obs, side="right") - 1, 0, edges.size - 2)
    res = obs - pred
    nb = edges.size - 1
    count = np.bincount(idx, minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_res = np.bincount(idx, weights=res, minlength=nb) / count
        mean_abs = np.bincount(idx, weights=np.abs(res), minlength=nb) / count
    return ResidualBins(edges, mean_res, mean_abs, count)


# Pipeline order used by the comparison report; blends follow, then anything else.
PIPELINE_ORDER = (
    "rf_base", "rf_full_capacity", "rf_geographical", "rf_full_elevation",
    "elasticnet", "lasso", "ridge",
)
DISPLAY_NAMES = {
    "rf_base": "Base Model",
    "rf_full_capacity": "Full Capacity Feature",
    "rf_geographical": "Geographical Features",
    "rf_full_elevation": "Full Supply Elevation",
    "elasticnet": "ElasticNet",
    "lasso": "Lasso",
    "ridge": "Ridge",
    "ols": "OLS",
}


def _order_key(item):
    pos, res = item
    if res.name in PIPELINE_ORDER:
        return (0, PIPELINE_ORDER.index(res.name), pos)
    if res.name.startswith("blend"):
        return (1, 0, pos)
    return (2, 0, pos)


def display_name(name: str) -> str:
    return DISPLAY_NAMES.get(name, name)


def comparison_report(results: list[EvalResult], labels: dict | None = None) -> dict:
    """Order results in pipeline order and return a JSON-ready report.

    ``labels`` overrides display labels by model name.
    """
    labels = labels or {}
    if not results:
        raise ValueError("comparison report needs at least one result")
    names = [r.name for r in results]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValueError(f"duplicate model names: {dupes}")
    ordered = [r for _, r in sorted(enumerate(results), key=_order_key)]
    return {
        "rows": [
            {"model": r.name, "label": labels.get(r.name, display_name(r.name)),
             "rmse": r.rmse, "r2": r.r2, "n": r.n}
            for r in ordered
        ]
    }


def format_table(report: dict, rmse_decimals: int = 2, r2_decimals: int = 3) -> str:
    """Plain-text aligned table (RMSE to 2 dp, R² to 3 dp)."""
    rows = [(row["label"], f"{row['rmse']:.{rmse_decimals}f}", f"{row['r2']:.{r2_decimals}f}")
            for row in report["rows"]]
    w0 = max(len("Model"), *(len(r[0]) for r in rows))
    w1 = max(len("RMSE"), *(len(r[1]) for r in rows))
    w2 = max(len("R²"), *(len(r[2]) for r in rows))
    lines = [f"{'Model':<{w0}}  {'RMSE':>{w1}}  {'R²':>{w2}}",
             f"{'-' * w0}  {'-' * w1}  {'-' * w2}"]
    lines += [f"{a:<{w0}}  {b:>{w1}}  {c:>{w2}}" for a, b, c in rows]
    return "\n".join(lines) + "\n"


def dump_json(obj, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_plot_csv(result: EvalResult, path: str | Path) -> None:
    """Per-row ``date,observed_mcm,predicted_mcm,residual_mcm`` export."""
    dates = result.dates or [""] * result.n
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "observed_mcm", "predicted_mcm", "residual_mcm"])
        for d, o, p in zip(dates, result.observed, result.predicted):
            w.writerow([d.isoformat() if isinstance(d, date) else d,
                        repr(float(o)), repr(float(p)), repr(float(o - p))])
