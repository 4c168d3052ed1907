"""Reading raw observation CSVs into ordered, cleaned datasets."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np

REQUIRED_FIELDS = ("date", "water_area", "volume")
OPTIONAL_FIELDS = ("gauge_stage", "inflow_elevation", "outflow_elevation", "river_distance")
NUMERIC_FIELDS = ("water_area", "gauge_stage", "volume",
                  "inflow_elevation", "outflow_elevation", "river_distance")
ALL_FIELDS = ("date",) + NUMERIC_FIELDS

DEFAULT_SENTINELS = frozenset({-9.9})


class SchemaError(ValueError):
    """A mapped column is missing from the CSV header."""


@dataclass(frozen=True)
class ObservationRecord:
    date: date
    water_area: float
    volume: float
    gauge_stage: float | None = None
    inflow_elevation: float | None = None
    outflow_elevation: float | None = None
    river_distance: float | None = None
    line: int = field(default=0, compare=False)

    def numeric_values(self):
        for name in NUMERIC_FIELDS:
            value = getattr(self, name)
            if value is not None:
                yield name, value


@dataclass(frozen=True)
class Provenance:
    source: str = "<memory>"
    raw_rows: int = 0
    dropped_sentinel: int = 0
    dropped_malformed: int = 0
    dropped_outlier: int = 0
    malformed: tuple[tuple[int, str], ...] = ()

    def reconciles(self, n_records: int) -> bool:
        return (n_records + self.dropped_sentinel + self.dropped_malformed
                + self.dropped_outlier) == self.raw_rows

    def as_dict(self) -> dict:
        return {
            "source": self.source,
            "raw_rows": self.raw_rows,
            "dropped_sentinel": self.dropped_sentinel,
            "dropped_malformed": self.dropped_malformed,
            "dropped_outlier": self.dropped_outlier,
            "malformed": [{"line": ln, "reason": why} for ln, why in self.malformed],
        }


@dataclass(frozen=True)
class Dataset:
    """Date-ordered, immutable collection of observations plus drop accounting."""

    records: tuple[ObservationRecord, ...]
    provenance: Provenance = Provenance()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        """Field values as a float array; absent optional values become NaN."""
        if name not in NUMERIC_FIELDS:
            raise KeyError(f"unknown numeric field {name!r}")
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.records], dtype=float)

    @property
    def dates(self) -> list[date]:
        return [r.date for r in self.records]

    def has_field(self, name: str) -> bool:
        """True when every record carries a value for ``name``."""
        return all(getattr(r, name) is not None for r in self.records)

    def subset(self, records: Iterable[ObservationRecord], **counts) -> Dataset:
        return Dataset(tuple(records), replace(self.provenance, **counts))


def _resolve_schema(header: list[str], schema: Mapping[str, str] | None) -> dict[str, str]:
    schema = dict(schema or {})
    unknown = set(schema) - set(ALL_FIELDS)
    if unknown:
        raise SchemaError(f"unknown logical field(s) in schema: {sorted(unknown)}")
    resolved = {}
    for name in ALL_FIELDS:
        if name in schema:
            column = schema[name]
            if column not in header:
                raise SchemaError(f"column {column!r} (mapped from {name!r}) not in CSV header")
            resolved[name] = column
        elif name in header:
            resolved[name] = name
        elif name in REQUIRED_FIELDS:
            raise SchemaError(f"required column {name!r} not in CSV header and not mapped")
    return resolved


def _parse_float(text: str, name: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"non-finite {name}")
    return value


def parse_csv(source: IO[str] | IO[bytes] | str | Path,
              schema: Mapping[str, str] | None = None) -> Dataset:
    """Parse an observation CSV.

    ``schema`` maps logical field names (``date``, ``water_area``, ``volume``,
    ``gauge_stage``, ...) to header names. Unmapped fields are looked up
    under their logical name. Bad rows are counted in the provenance with
    their line numbers rather than raising.
    """
    label = "<stream>"
    if isinstance(source, (str, Path)):
        label = str(source)
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return _parse(fh, schema, label)
    stream = source
    if isinstance(source, (io.BufferedIOBase, io.RawIOBase)) or "b" in getattr(source, "mode", ""):
        stream = io.TextIOWrapper(source, encoding="utf-8", newline="")
    return _parse(stream, schema, str(getattr(source, "name", label)))


def _parse(fh, schema, label) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("CSV has no header row") from None
    columns = _resolve_schema(header, schema)
    index = {name: header.index(col) for name, col in columns.items()}

    parsed: list[ObservationRecord] = []
    malformed: list[tuple[int, str]] = []
    raw = 0
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        raw += 1
        try:
            values = {}
            for name, i in index.items():
                cell = row[i].strip() if i < len(row) else ""
                if name == "date":
                    values[name] = date.fromisoformat(cell)
                elif cell == "":
                    if name in REQUIRED_FIELDS:
                        raise ValueError(f"missing {name}")
                    values[name] = None
                else:
                    try:
                        values[name] = _parse_float(cell, name)
                    except ValueError:
                        raise ValueError(f"unparseable {name} {cell!r}") from None
            parsed.append(ObservationRecord(line=line, **values))
        except ValueError as exc:
            malformed.append((line, str(exc)))

    parsed.sort(key=lambda r: r.date)
    records = []
    for rec in parsed:
        if records and records[-1].date == rec.date:
            malformed.append((rec.line, f"duplicate date {rec.date.isoformat()}"))
            continue
        records.append(rec)
    malformed.sort()
    prov = Provenance(source=label, raw_rows=raw, dropped_malformed=len(malformed),
                      malformed=tuple(malformed))
    return Dataset(tuple(records), prov)


def drop_sentinels(ds: Dataset, sentinels: Iterable[float] = DEFAULT_SENTINELS) -> Dataset:
    """Remove records where any numeric field exactly equals a sentinel.

    Records left with a negative area or volume are moved to the malformed
    count, so cleaned data always has ``water_area >= 0`` and ``volume >= 0``.
    """
    sentinels = frozenset(float(s) for s in sentinels)
    if not sentinels:
        raise ValueError("sentinel set must be non-empty")
    kept, n_sentinel = [], 0
    malformed = list(ds.provenance.malformed)
    for rec in ds.records:
        if any(value in sentinels for _, value in rec.numeric_values()):
            n_sentinel += 1
        elif rec.water_area < 0 or rec.volume < 0:
            malformed.append((rec.line, "negative water_area or volume"))
        else:
            kept.append(rec)
    n_negative = len(malformed) - len(ds.provenance.malformed)
    prov = ds.provenance
    return Dataset(tuple(kept), replace(
        prov,
        dropped_sentinel=prov.dropped_sentinel + n_sentinel,
        dropped_malformed=prov.dropped_malformed + n_negative,
        malformed=tuple(sorted(malformed)),
    ))


def chronological_split(ds: Dataset, train_fraction: float = 0.8) -> tuple[Dataset, Dataset]:
    """First ``ceil(n * train_fraction)`` records train, the rest test."""
    n = len(ds)
    if n < 2:
        raise ValueError(f"cannot split a dataset of {n} record(s)")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = min(math.ceil(n * train_fraction), n - 1)
    return (Dataset(ds.records[:n_train], ds.provenance),
            Dataset(ds.records[n_train:], ds.provenance))


def random_split(ds: Dataset, train_fraction: float = 0.8,
                 seed: int = 0) -> tuple[Dataset, Dataset]:
    """Seeded shuffled split; each side keeps date order."""
    n = len(ds)
    if n < 2:
        raise ValueError(f"cannot split a dataset of {n} record(s)")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = min(math.ceil(n * train_fraction), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    return (Dataset(tuple(ds.records[i] for i in train_idx), ds.provenance),
            Dataset(tuple(ds.records[i] for i in test_idx), ds.provenance))


def write_csv(ds: Dataset, path: str | Path) -> None:
    """Write records back out using logical field names as the header."""
    present = [f for f in OPTIONAL_FIELDS if any(getattr(r, f) is not None for r in ds.records)]
    header = ["date", "water_area", "volume"] + present
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in ds.records:
            row = [rec.date.isoformat()]
            for name in header[1:]:
                value = getattr(rec, name)
                row.append("" if value is None else repr(float(value)))
            writer.writerow(row)
