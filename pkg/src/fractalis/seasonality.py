"""Intraday seasonality: per-slot cross-day averages removed by division."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import KindError, ShapeError
from .ingest import Kind, QuantitySeries


@dataclass(frozen=True)
class DailyPattern:
    """Mean value of a quantity at each intraday slot, over ``n_days`` days."""

    values: np.ndarray
    kind: Kind
    n_days: int

    @property
    def slots_per_day(self) -> int:
        return int(self.values.size)

    def rows(self):
        """(slot index, average) pairs for export."""
        return [(j, float(v)) for j, v in enumerate(self.values)]


def _grid(series: QuantitySeries) -> np.ndarray:
    S = series.slots_per_day
    if S <= 0 or series.length % S:
        raise ShapeError(f"length {series.length} is not a multiple of {S} slots per day")
    return np.asarray(series.values, dtype=np.float64).reshape(-1, S)


def daily_pattern(series: QuantitySeries) -> DailyPattern:
    """Arithmetic mean over days of each intraday slot of an unsigned series."""
    if not series.kind.unsigned:
        raise KindError("returns are signed; the daily pattern applies to |R|, T and V only")
    grid = _grid(series)
    values = grid.mean(axis=0)
    values.setflags(write=False)
    return DailyPattern(values, series.kind, grid.shape[0])


def detrend_daily(series: QuantitySeries, pattern: DailyPattern | None = None) -> QuantitySeries:
    """Divide every value by the daily-pattern average of its slot.

    Slots whose average is zero carry no activity on any day; they stay zero
    and are listed in ``zero_slots`` of the result. Returns are handed back
    unchanged.
    """
    if not series.kind.unsigned:
        return series
    if pattern is None:
        pattern = daily_pattern(series)
    grid = _grid(series)
    if pattern.slots_per_day != grid.shape[1]:
        raise ShapeError(f"pattern has {pattern.slots_per_day} slots, series has {grid.shape[1]}")
    zero = pattern.values == 0
    divisor = np.where(zero, 1.0, pattern.values)
    out = np.where(zero, 0.0, grid / divisor).ravel()
    return replace(series, values=out, detrended=True, zero_slots=np.flatnonzero(zero))
