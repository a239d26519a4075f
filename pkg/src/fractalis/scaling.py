"""Power-law fits of fluctuation surfaces, masking, and joined series."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ShapeError
from .fractal import FluctuationSurface

MIN_POINTS = 6
QUALITY_GATE = 0.98
EDGE_TRIM = 3


@dataclass(frozen=True)
class ScalingSpectrum:
    """Fitted exponents per q.

    ``exponent`` holds h(q) (MFDFA) or lambda(q) (MFCCA) and is NaN where
    ``defined`` is False. ``unnormalized`` is q times the exponent, i.e. the
    slope of the q-th moment itself (gamma(q) or delta(q)).
    """

    kind: str
    q: np.ndarray
    exponent: np.ndarray
    r2: np.ndarray
    n_used: np.ndarray
    n_masked: np.ndarray
    defined: np.ndarray
    fit_range: tuple[int, int]

    @property
    def unnormalized(self) -> np.ndarray:
        return self.q * self.exponent

    @property
    def width(self) -> float:
        """max - min of the exponent over the q values where it is defined."""
        vals = self.exponent[self.defined]
        return float(vals.max() - vals.min()) if vals.size else float("nan")

    def at(self, q: float) -> float:
        i = int(np.flatnonzero(np.isclose(self.q, q))[0])
        return float(self.exponent[i])


def mask_negative(surface: FluctuationSurface) -> FluctuationSurface:
    """Flag negative F cells as masked; values themselves are kept."""
    with np.errstate(invalid="ignore"):
        neg = surface.values < 0
    return replace(surface, masked=surface.masked | neg)


def default_fit_range(scales: Sequence[int], trim: int = EDGE_TRIM) -> tuple[int, int]:
    """Scale grid minus its ``trim`` smallest and largest entries."""
    scales = np.asarray(scales)
    if scales.size > 2 * trim:
        return int(scales[trim]), int(scales[-trim - 1])
    return int(scales[0]), int(scales[-1])


def _line_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    slope = float(dx @ dy) / sxx
    resid = dy - slope * dx
    syy = float(dy @ dy)
    r2 = 1.0 - float(resid @ resid) / syy if syy > 0 else 1.0
    return slope, r2


def fit_exponents(surface: FluctuationSurface, fit_range: tuple[int, int] | None = None,
                  quality_gate: float = QUALITY_GATE, min_points: int = MIN_POINTS,
                  include_q0: bool = True) -> ScalingSpectrum:
    """Least-squares slope of ln F against ln s for every q.

    Cells that are masked, non-positive or non-finite are left out. A q gets
    an exponent only if at least ``min_points`` scales survive inside
    ``fit_range`` and the fit reaches ``quality_gate`` in R^2.
    """
    scales = np.asarray(surface.scales)
    if np.unique(scales).size < 2:
        raise ShapeError("need at least two distinct scales to fit")
    lo, hi = fit_range if fit_range is not None else default_fit_range(scales)
    in_range = (scales >= lo) & (scales <= hi)
    log_s = np.log(scales.astype(np.float64))
    nq = surface.q.size
    exponent = np.full(nq, np.nan)
    r2 = np.full(nq, np.nan)
    n_used = np.zeros(nq, dtype=np.int64)
    n_masked = np.zeros(nq, dtype=np.int64)
    defined = np.zeros(nq, dtype=bool)
    for i, q in enumerate(surface.q):
        row = surface.values[i]
        with np.errstate(invalid="ignore"):
            ok = in_range & ~surface.masked[i] & np.isfinite(row) & (row > 0)
        n_used[i] = int(ok.sum())
        n_masked[i] = int(in_range.sum()) - n_used[i]
        if n_used[i] < 2 or np.unique(scales[ok]).size < 2:
            continue
        slope, fit_r2 = _line_fit(log_s[ok], np.log(row[ok]))
        r2[i] = fit_r2
        if n_used[i] >= min_points and fit_r2 >= quality_gate and (include_q0 or q != 0):
            exponent[i] = slope
            defined[i] = True
    kind = "h" if surface.mode == "MFDFA" else "lambda"
    return ScalingSpectrum(kind, surface.q.copy(), exponent, r2, n_used, n_masked, defined, (int(lo), int(hi)))


def average_hurst(hx: ScalingSpectrum, hy: ScalingSpectrum) -> np.ndarray:
    """h_xy(q) = (h_x(q) + h_y(q)) / 2, NaN unless both sides are defined."""
    if hx.q.shape != hy.q.shape or not np.allclose(hx.q, hy.q):
        raise ShapeError("spectra are on different q grids")
    both = hx.defined & hy.defined
    return np.where(both, (hx.exponent + hy.exponent) / 2.0, np.nan)


@dataclass(frozen=True)
class JoinedSeries:
    values: np.ndarray
    boundaries: tuple[int, ...]
    instruments: tuple[str, ...]

    @property
    def length(self) -> int:
        return int(self.values.size)

    @property
    def min_segment(self) -> int:
        edges = (0, *self.boundaries)
        return min(b - a for a, b in zip(edges[:-1], edges[1:]))


def join_series(series_list, order: Sequence[str] | None = None) -> JoinedSeries:
    """Concatenate per-instrument series of one kind and interval length.

    ``series_list`` holds :class:`~fractalis.ingest.QuantitySeries` objects
    (or plain arrays, then ``order`` only names them). ``boundaries`` are the
    cumulative end offsets of each segment.
    """
    items = list(series_list)
    if not items:
        raise ShapeError("nothing to join")
    if hasattr(items[0], "kind"):
        by_id = {s.instrument: s for s in items}
        if order is not None:
            items = [by_id[name] for name in order]
        kinds = {(s.kind, s.detrended) for s in items}
        dts = {s.dt_minutes for s in items}
        if len(kinds) > 1 or len(dts) > 1:
            raise ShapeError(f"cannot join mixed series: kinds {kinds}, dt {dts}")
        names = tuple(s.instrument for s in items)
        arrays = [np.asarray(s.values, dtype=np.float64) for s in items]
    else:
        arrays = [np.asarray(a, dtype=np.float64) for a in items]
        names = tuple(order) if order is not None else tuple(str(i) for i in range(len(arrays)))
        if len(names) != len(arrays):
            raise ShapeError("order does not match the number of series")
    if any(a.size == 0 for a in arrays):
        raise ShapeError("cannot join an empty series")
    values = np.concatenate(arrays)
    values.setflags(write=False)
    bounds = tuple(int(b) for b in np.cumsum([a.size for a in arrays]))
    return JoinedSeries(values, bounds, names)
