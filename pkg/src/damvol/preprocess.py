"""Quantiles, IQR outlier filtering and column standardization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import Dataset


@dataclass(frozen=True)
class QuartileSummary:
    q1: float
    median: float
    q3: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1

    def bounds(self, k: float = 1.5) -> tuple[float, float]:
        return self.q1 - k * self.iqr, self.q3 + k * self.iqr


def quantile(values, p):
    """Linear-interpolation quantile at position ``(n - 1) * p``.

    ``p`` may be a scalar or array in [0, 1].
    """
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if x.size == 0:
        raise ValueError("quantile of an empty sequence")
    if not np.all(np.isfinite(x)):
        raise ValueError("quantile input must be finite")
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("quantile level must lie in [0, 1]")
    pos = (x.size - 1) * p
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, x.size - 1)
    frac = pos - lo
    out = x[lo] + frac * (x[hi] - x[lo])
    return float(out) if out.ndim == 0 else out


def quartiles(values) -> QuartileSummary:
    q1, med, q3 = quantile(values, [0.25, 0.5, 0.75])
    return QuartileSummary(float(q1), float(med), float(q3))


def iqr_filter(ds: Dataset, field: str = "water_area", k: float = 1.5,
               reference: Dataset | None = None) -> tuple[Dataset, int]:
    """Drop records whose ``field`` lies outside ``[q1 - k*iqr, q3 + k*iqr]``.

    Quartiles come from ``reference`` when given (typically the training
    split), otherwise from ``ds`` itself.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    basis = ds if reference is None else reference
    if len(basis) < 4:
        raise ValueError(f"IQR filtering needs at least 4 records, got {len(basis)}")
    ref_values = basis.column(field)
    values = ds.column(field)
    if np.isnan(ref_values).any() or np.isnan(values).any():
        raise ValueError(f"field {field!r} is missing on some records")
    lo, hi = quartiles(ref_values).bounds(k)
    keep = (values >= lo) & (values <= hi)
    kept = [r for r, ok in zip(ds.records, keep) if ok]
    removed = len(ds) - len(kept)
    return ds.subset(kept, dropped_outlier=ds.provenance.dropped_outlier + removed), removed


@dataclass(frozen=True)
class Standardizer:
    """Per-column centering and population-sd scaling.

    Constant columns keep scale 1 and are flagged in ``constant`` so penalized
    fits can pin their coefficient to zero.
    """

    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray

    @classmethod
    def fit(cls, X) -> Standardizer:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] < 2:
            raise ValueError("standardizer needs at least 2 rows")
        mean = X.mean(axis=0)
        sd = np.sqrt(((X - mean) ** 2).mean(axis=0))
        # relative test so that large constant offsets still count as constant
        constant = sd <= 1e-12 * np.maximum(1.0, np.abs(mean))
        scale = np.where(constant, 1.0, sd)
        return cls(mean, scale, constant)

    def apply(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = (X - self.mean) / self.scale
        out[..., self.constant] = 0.0
        return out

    def invert(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        out = Z * self.scale + self.mean
        out[..., self.constant] = self.mean[self.constant]
        return out

    def to_dict(self) -> dict:
        return {
            "mean": [float(v) for v in self.mean],
            "scale": [float(v) for v in self.scale],
            "constant": [bool(v) for v in self.constant],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Standardizer:
        return cls(np.array(d["mean"], dtype=float), np.array(d["scale"], dtype=float),
                   np.array(d["constant"], dtype=bool))


def fit_standardizer(X) -> Standardizer:
    return Standardizer.fit(X)
