"""Panels of observations, CSV ingestion and the shared run configuration."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    DomainError,
    ParseError,
    SchemaError,
)
from .spectral import BandPartition, daily_bands

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TimeSeriesPanel:
    """T x N block of observations with labels.

    Time labels are opaque strings; their order is the row order.
    """

    values: np.ndarray
    time_labels: tuple[str, ...]
    series_names: tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionError("panel values must be a T x N matrix")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time_labels", tuple(str(x) for x in self.time_labels))
        object.__setattr__(self, "series_names", tuple(str(x) for x in self.series_names))
        T, N = values.shape
        if T < 1:
            raise DimensionError("panel needs at least one observation")
        if N < 2:
            raise DimensionError(f"panel needs at least 2 series, got {N}")
        if len(self.series_names) != N:
            raise SchemaError(f"{len(self.series_names)} series names for {N} columns")
        if len(self.time_labels) != T:
            raise SchemaError(f"{len(self.time_labels)} time labels for {T} rows")
        dup = _duplicates(self.series_names)
        if dup:
            raise SchemaError(f"duplicate series name(s): {', '.join(dup)}")
        dup = _duplicates(self.time_labels)
        if dup:
            raise SchemaError(f"duplicate time label(s): {', '.join(dup[:5])}")
        if not np.all(np.isfinite(values)):
            raise DomainError("panel contains non-finite values")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, TimeSeriesPanel):
            return NotImplemented
        return (
            self.time_labels == other.time_labels
            and self.series_names == other.series_names
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )

    @classmethod
    def from_array(cls, values, series_names: Sequence[str] | None = None) -> "TimeSeriesPanel":
        values = np.asarray(values, dtype=float)
        if values.ndim != 2:
            raise DimensionError("panel values must be a T x N matrix")
        names = series_names or [f"x{i + 1}" for i in range(values.shape[1])]
        return cls(values, tuple(str(t) for t in range(1, values.shape[0] + 1)), tuple(names))


def _duplicates(items) -> list[str]:
    seen, dup = set(), []
    for x in items:
        if x in seen and x not in dup:
            dup.append(x)
        seen.add(x)
    return dup


def load_panel(path, format: str = "csv") -> TimeSeriesPanel:
    """Read a panel: header row of series names, time label in the first column.

    Rows with an empty cell are dropped with a warning. Any other cell that
    is not a finite number (including ``NaN`` and ``inf``) is a parse error.
    """
    if format != "csv":
        raise ConfigError(f"unsupported panel format {format!r}")
    path = Path(path)
    if not path.is_file():
        raise DomainError(f"input file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    names = header[1:]
    if len(names) < 2:
        raise DimensionError(f"{path}: need at least 2 series, header has {len(names)}")
    dup = _duplicates(names)
    if dup:
        raise SchemaError(f"{path}: duplicate series name(s): {', '.join(dup)}")

    labels, body, dropped = [], [], 0
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
        cells = [c.strip() for c in row[1:]]
        if any(c == "" for c in cells):
            dropped += 1
            continue
        parsed = []
        for name, cell in zip(names, cells):
            try:
                x = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {lineno}, column {name!r}: cannot parse {cell!r}") from None
            if not math.isfinite(x):
                raise ParseError(f"{path}: row {lineno}, column {name!r}: non-finite value {cell!r}")
            parsed.append(x)
        labels.append(row[0].strip())
        body.append(parsed)
    if dropped:
        log.warning("%s: dropped %d row(s) with missing values", path, dropped)
    if not body:
        raise DimensionError(f"{path}: no complete observations")
    return TimeSeriesPanel(np.array(body), tuple(labels), tuple(names))


def write_panel(panel: TimeSeriesPanel, path) -> None:
    """Write a panel so that :func:`load_panel` reads back identical floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", *panel.series_names])
        for label, row in zip(panel.time_labels, panel.values):
            w.writerow([label, *(repr(float(x)) for x in row)])


def annualize_rv(panel: TimeSeriesPanel) -> TimeSeriesPanel:
    """Map daily realized variances to annualized volatilities, ``100*sqrt(252*x)``."""
    if np.any(panel.values < 0):
        t, j = np.argwhere(panel.values < 0)[0]
        raise DomainError(
            f"negative realized variance at time {panel.time_labels[t]!r}, series {panel.series_names[j]!r}"
        )
    return replace(panel, values=100.0 * np.sqrt(252.0 * panel.values))


@dataclass(frozen=True)
class RunConfig:
    lags: int = 2
    horizon: int = 100
    bandwidth: float = 8.0
    n_draws: int = 500
    shrinkage: float = 0.05
    first_lag_prior_mean: float = 0.1
    bands: BandPartition = field(default_factory=daily_bands)
    seed: int = 0
    # 1-based observation numbers; None means every estimable time point
    time_grid: tuple[int, ...] | None = None

    def __post_init__(self):
        if int(self.lags) != self.lags or self.lags < 1:
            raise ConfigError(f"lag order must be a positive integer, got {self.lags}")
        if int(self.horizon) != self.horizon or self.horizon < 2:
            raise ConfigError(f"truncation H must be an integer >= 2, got {self.horizon}")
        if int(self.n_draws) != self.n_draws or self.n_draws < 2:
            raise ConfigError(f"number of draws must be an integer >= 2, got {self.n_draws}")
        if not self.bandwidth > 0:
            raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        if not self.shrinkage > 0:
            raise ConfigError(f"shrinkage must be positive, got {self.shrinkage}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.time_grid is not None:
            grid = tuple(int(t) for t in self.time_grid)
            if not grid:
                raise ConfigError("time grid is empty")
            if min(grid) < 1:
                raise ConfigError("time grid entries are 1-based observation numbers")
            object.__setattr__(self, "time_grid", tuple(sorted(set(grid))))
        self.bands.index_sets(self.horizon)

    def focal_times(self, T: int) -> tuple[int, ...]:
        """Observation numbers to estimate at; each needs ``lags`` earlier rows."""
        grid = self.time_grid if self.time_grid is not None else range(self.lags + 1, T + 1)
        bad = [t for t in grid if t <= self.lags or t > T]
        if bad:
            raise ConfigError(f"time grid points {bad[:5]} outside {self.lags + 1}..{T}")
        return tuple(grid)

    def to_dict(self) -> dict:
        return {
            "lags": self.lags,
            "horizon": self.horizon,
            "bandwidth": self.bandwidth,
            "n_draws": self.n_draws,
            "shrinkage": self.shrinkage,
            "first_lag_prior_mean": self.first_lag_prior_mean,
            "bands": self.bands.to_dict(),
            "seed": self.seed,
            "time_grid": list(self.time_grid) if self.time_grid is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if "bands" in d and not isinstance(d["bands"], BandPartition):
            bands = d["bands"]
            d["bands"] = BandPartition.from_periods(bands) if isinstance(bands, str) else BandPartition.from_dict(bands)
        if d.get("time_grid") is not None:
            d["time_grid"] = tuple(d["time_grid"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown run configuration key(s): {sorted(unknown)}")
        return cls(**d)
