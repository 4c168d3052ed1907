"""Piecewise-linear stage/volume rating curves."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class RatingCurveWarning(UserWarning):
    """A lookup fell outside the surveyed knot range and was clamped."""


class NoInflectionError(ValueError):
    pass


@dataclass(frozen=True)
class RatingCurve:
    stage: np.ndarray   # m, strictly increasing
    volume: np.ndarray  # MCM, non-decreasing

    def __len__(self) -> int:
        return self.stage.size

    def knots(self) -> list[tuple[float, float]]:
        return [(float(s), float(v)) for s, v in zip(self.stage, self.volume)]

    def to_dict(self) -> dict:
        return {"stage_m": self.stage.tolist(), "volume_mcm": self.volume.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> RatingCurve:
        return build_curve(list(zip(d["stage_m"], d["volume_mcm"])))


def build_curve(points) -> RatingCurve:
    """Sort ``(stage, volume)`` pairs by stage and validate monotonicity."""
    pts = sorted((float(s), float(v)) for s, v in points)
    if len(pts) < 2:
        raise ValueError("a rating curve needs at least 2 points")
    stage = np.array([p[0] for p in pts])
    volume = np.array([p[1] for p in pts])
    if not (np.all(np.isfinite(stage)) and np.all(np.isfinite(volume))):
        raise ValueError("rating curve points must be finite")
    dup = np.flatnonzero(np.diff(stage) == 0)
    if dup.size:
        raise ValueError(f"duplicate stage(s): {sorted({float(stage[i]) for i in dup})}")
    bad = np.flatnonzero(np.diff(volume) < 0)
    if bad.size:
        pairs = [(pts[i], pts[i + 1]) for i in bad]
        raise ValueError(f"volume decreases with stage between {pairs}")
    return RatingCurve(stage, volume)


def volume_at(c: RatingCurve, stage):
    """Interpolated volume; stages outside the knots clamp to the end volumes."""
    s = np.asarray(stage, dtype=float)
    if np.any((s < c.stage[0]) | (s > c.stage[-1])):
        warnings.warn("stage outside rating-curve range; volume clamped", RatingCurveWarning,
                      stacklevel=2)
    out = np.interp(s, c.stage, c.volume)
    return float(out) if out.ndim == 0 else out


def _stage_scalar(c: RatingCurve, v: float) -> float:
    if v < c.volume[0] or v > c.volume[-1]:
        raise ValueError(f"volume {v} outside rating-curve range "
                         f"[{c.volume[0]}, {c.volume[-1]}]")
    # first knot with volume >= v gives the lowest stage on a flat run
    j = int(np.searchsorted(c.volume, v, side="left"))
    if c.volume[j] == v:
        return float(c.stage[j])
    v0, v1 = c.volume[j - 1], c.volume[j]
    s0, s1 = c.stage[j - 1], c.stage[j]
    return float(s0 + (v - v0) * (s1 - s0) / (v1 - v0))


def stage_at(c: RatingCurve, volume):
    """Inverse lookup; flat segments resolve to their lowest stage."""
    v = np.asarray(volume, dtype=float)
    if v.ndim == 0:
        return _stage_scalar(c, float(v))
    return np.array([_stage_scalar(c, float(x)) for x in v.ravel()]).reshape(v.shape)


def segment_slopes(c: RatingCurve) -> np.ndarray:
    return np.diff(c.volume) / np.diff(c.stage)


def detect_threshold(c: RatingCurve) -> tuple[float, float]:
    """Interior knot where the segment slope increases the most.

    Ties go to the higher stage. Raises :class:`NoInflectionError` when no
    interior knot increases the slope.
    """
    if len(c) < 3:
        raise ValueError("threshold detection needs at least 3 knots")
    slopes = segment_slopes(c)
    jump = np.diff(slopes)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(slopes))))
    best = float(jump.max())
    if best <= tol:
        raise NoInflectionError("no inflection: segment slopes never increase")
    # last index among (near-)maximal jumps -> higher stage wins ties
    i = int(np.flatnonzero(jump >= best - tol)[-1]) + 1
    return float(c.stage[i]), float(c.volume[i])


def read_curve_csv(path: str | Path) -> RatingCurve:
    """Read a ``stage_m,volume_mcm`` CSV."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if "stage_m" not in fields or "volume_mcm" not in fields:
            raise ValueError(f"{path}: header must contain stage_m,volume_mcm")
        pts = []
        for row in reader:
            row = {k.strip(): v for k, v in row.items()}
            pts.append((float(row["stage_m"]), float(row["volume_mcm"])))
    return build_curve(pts)


def write_curve_csv(c: RatingCurve, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage_m", "volume_mcm"])
        for s, v in c.knots():
            w.writerow([repr(s), repr(v)])
