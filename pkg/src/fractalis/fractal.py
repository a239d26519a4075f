"""Detrended fluctuation surfaces: MFDFA for one series, sign-preserving MFCCA for pairs.

Every surface is built from the same per-box statistics. For a box size ``s``
the profile is tiled with ``Ns = L // s`` boxes from the start and ``Ns`` boxes
from the end, a degree-``m`` polynomial is removed from each box, and the mean
product of the residuals gives the box variance (one series) or covariance
(two series). The q-order fluctuation functions are generalized means of those
box statistics with the sign kept outside the modulus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, DataError, ShapeError

# Upper bound on the number of profile values held as residuals per chunk.
_CHUNK_VALUES = 1 << 21
# Box statistics below this fraction of the box's mean squared profile are roundoff: treated as 0.
ZERO_TOL = (1e3 * np.finfo(np.float64).eps) ** 2

DEFAULT_Q = tuple(float(q) for q in np.round(np.arange(-4.0, 4.0 + 1e-9, 0.5), 10))


@dataclass(frozen=True)
class AnalysisConfig:
    """Parameters shared by MFDFA and MFCCA.

    ``scales`` may be left as ``None``; :meth:`scale_grid` then builds a
    geometric grid of about ``n_scales`` integer box sizes between
    ``max(16, m + 2)`` and ``L // 4``.
    """

    m: int = 2
    q: tuple[float, ...] = DEFAULT_Q
    scales: tuple[int, ...] | None = None
    n_scales: int = 30
    s_min: int | None = None
    s_max: int | None = None
    demean: bool = True

    def __post_init__(self):
        if self.m < 0:
            raise ConfigError(f"polynomial degree must be >= 0, got {self.m}")
        q = tuple(float(v) for v in self.q)
        if not q or not all(math.isfinite(v) for v in q):
            raise ConfigError("q grid must be non-empty and finite")
        object.__setattr__(self, "q", q)
        if self.scales is not None:
            scales = tuple(sorted({int(s) for s in self.scales}))
            if not scales:
                raise ConfigError("explicit scale grid is empty")
            object.__setattr__(self, "scales", scales)

    def scale_grid(self, length: int) -> np.ndarray:
        """Box sizes used for a series of ``length`` points."""
        if self.scales is not None:
            scales = np.asarray(self.scales, dtype=np.int64)
        else:
            lo = self.s_min if self.s_min is not None else max(16, self.m + 2)
            hi = self.s_max if self.s_max is not None else length // 4
            if hi < lo:
                raise ConfigError(f"series of length {length} too short for s_min={lo}")
            scales = np.unique(np.round(np.geomspace(lo, hi, self.n_scales)).astype(np.int64))
        if scales[0] < self.m + 2:
            raise ConfigError(f"s_min={scales[0]} below m + 2 = {self.m + 2}")
        if scales[-1] > length // 4:
            raise ConfigError(f"s_max={scales[-1]} exceeds L/4 = {length // 4}")
        return scales


@dataclass(frozen=True)
class DetrendedBox:
    index: int
    residuals: np.ndarray


@dataclass(frozen=True)
class FluctuationSurface:
    """Fluctuation function values on the (q, s) grid.

    ``values[i, j]`` is F_q(s) (MFDFA) or the signed F_qXY(s) (MFCCA) for
    ``q[i]`` and ``scales[j]``. ``boxes_used`` counts the boxes entering each
    cell; boxes with a zero statistic are dropped for q <= 0 and counted in
    ``boxes_excluded``. ``masked`` flags cells excluded from exponent fits
    without altering ``values``.
    """

    mode: str
    q: np.ndarray
    scales: np.ndarray
    values: np.ndarray
    boxes_used: np.ndarray
    boxes_excluded: np.ndarray
    config: AnalysisConfig
    masked: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.masked is None:
            object.__setattr__(self, "masked", np.zeros(self.values.shape, dtype=bool))
        for name in ("q", "scales", "values", "boxes_used", "boxes_excluded", "masked"):
            getattr(self, name).setflags(write=False)

    @property
    def total_boxes(self) -> np.ndarray:
        """2 M_s for every scale."""
        return self.boxes_used[0] + self.boxes_excluded[0]

    @property
    def sign(self) -> np.ndarray:
        return np.sign(self.values)


def profile(x, demean: bool = True) -> np.ndarray:
    """Cumulative sum of ``x``, optionally after removing its mean."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError("profile expects a one-dimensional series")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    if demean and x.size:
        x = x - x.mean()
    return np.cumsum(x)


@lru_cache(maxsize=512)
def _basis(s: int, m: int) -> np.ndarray:
    # Orthonormal columns spanning polynomials of degree <= m on abscissae 1..s.
    t = np.linspace(-1.0, 1.0, s) if s > 1 else np.zeros(1)
    q, _ = np.linalg.qr(np.vander(t, m + 1, increasing=True))
    q.setflags(write=False)
    return q


def _residuals(boxes: np.ndarray, m: int) -> np.ndarray:
    basis = _basis(boxes.shape[-1], m)
    return boxes - (boxes @ basis) @ basis.T


def detrend_box(segment, m: int = 2, index: int = 0) -> DetrendedBox:
    """Remove the least-squares degree-``m`` polynomial from one profile box."""
    segment = np.asarray(segment, dtype=np.float64)
    if segment.size < m + 2:
        raise ShapeError(f"box of length {segment.size} too short for degree {m}")
    return DetrendedBox(index, _residuals(segment[None, :], m)[0])


def box_variance(box: DetrendedBox) -> float:
    r = box.residuals
    return float(np.sum(r * r) / r.size)


def box_covariance(box_x: DetrendedBox, box_y: DetrendedBox) -> float:
    if box_x.residuals.shape != box_y.residuals.shape:
        raise ShapeError("boxes differ in length")
    return float(np.sum(box_x.residuals * box_y.residuals) / box_x.residuals.size)


def box_statistics(profiles: Sequence[np.ndarray], products: Sequence[tuple[int, int]], s: int, m: int) -> np.ndarray:
    """Box variances/covariances for every requested product of profiles.

    Returns an array of shape ``(len(products), 2 * (L // s))``: boxes
    ``0 .. Ns-1`` tile from the start, boxes ``Ns .. 2Ns-1`` from the end
    (box ``Ns`` holds the last ``s`` points). Values at roundoff level
    relative to the boxes' profile magnitude are set to exactly zero.
    """
    length = profiles[0].size
    n_boxes = length // s
    out = np.empty((len(products), 2 * n_boxes))
    needed = sorted({i for pair in products for i in pair})
    rows = max(1, _CHUNK_VALUES // s)
    for t in (0, 1):
        for lo in range(0, n_boxes, rows):
            hi = min(n_boxes, lo + rows)
            res, power = {}, {}
            for i in needed:
                p = profiles[i]
                if t == 0:
                    block = p[lo * s:hi * s].reshape(hi - lo, s)
                else:
                    end = length - lo * s
                    block = p[end - (hi - lo) * s:end].reshape(hi - lo, s)[::-1]
                res[i] = _residuals(block, m)
                power[i] = np.sum(block * block, axis=1) / s
            for k, (a, b) in enumerate(products):
                f2 = np.sum(res[a] * res[b], axis=1) / s
                floor = ZERO_TOL * np.sqrt(power[a] * power[b])
                out[k, t * n_boxes + lo:t * n_boxes + hi] = np.where(np.abs(f2) <= floor, 0.0, f2)
    return out


def fluctuation_moments(f2: np.ndarray, q_grid: Sequence[float]):
    """Generalized signed means of box statistics for each q.

    Returns ``(values, used, excluded)``; for q <= 0 boxes with a zero
    statistic are skipped. The q = 0 value is the logarithmic limit
    ``exp(mean(sign(f2) * ln|f2|) / 2)``.
    """
    nq = len(q_grid)
    values = np.empty(nq)
    used = np.empty(nq, dtype=np.int64)
    excluded = np.empty(nq, dtype=np.int64)
    signs = np.sign(f2)
    mags = np.abs(f2)
    nonzero = mags > 0
    n_nonzero = int(nonzero.sum())
    nz_signs = signs[nonzero]
    nz_mags = mags[nonzero]
    logs = None
    for i, q in enumerate(q_grid):
        if q > 0:
            used[i], excluded[i] = f2.size, 0
            terms = signs * mags ** (q / 2.0)
        else:
            used[i], excluded[i] = n_nonzero, f2.size - n_nonzero
            if q < 0:
                terms = nz_signs * nz_mags ** (q / 2.0)
            else:
                if logs is None:
                    logs = nz_signs * np.log(nz_mags)
                terms = logs
        if used[i] == 0:
            values[i] = np.nan
            continue
        mean = math.fsum(terms.tolist()) / used[i]
        if q == 0:
            values[i] = math.exp(mean / 2.0)
        else:
            values[i] = math.copysign(abs(mean) ** (1.0 / q), mean) if mean != 0 else 0.0
    return values, used, excluded


def fluctuation_surfaces(series: Mapping[str, np.ndarray], cfg: AnalysisConfig,
                         autos: Sequence[str] = (), pairs: Sequence[tuple[str, str]] = ()):
    """Compute several MFDFA and MFCCA surfaces sharing one detrending pass.

    All series must have equal length. Keys of the result are the names in
    ``autos`` and the tuples in ``pairs``.
    """
    names = list(dict.fromkeys([*autos, *(n for p in pairs for n in p)]))
    if not names:
        return {}
    arrays = [np.asarray(series[n], dtype=np.float64) for n in names]
    length = arrays[0].size
    if any(a.size != length for a in arrays):
        raise ShapeError("series lengths differ")
    scales = cfg.scale_grid(length)
    profiles = [profile(a, cfg.demean) for a in arrays]
    idx = {n: i for i, n in enumerate(names)}
    keys = [*autos, *pairs]
    products = [(idx[k], idx[k]) if isinstance(k, str) else (idx[k[0]], idx[k[1]]) for k in keys]
    q = np.asarray(cfg.q)
    shape = (len(q), len(scales))
    acc = {k: (np.empty(shape), np.empty(shape, dtype=np.int64), np.empty(shape, dtype=np.int64)) for k in keys}
    for j, s in enumerate(scales):
        f2 = box_statistics(profiles, products, int(s), cfg.m)
        for k, key in enumerate(keys):
            vals, used, excl = fluctuation_moments(f2[k], cfg.q)
            acc[key][0][:, j] = vals
            acc[key][1][:, j] = used
            acc[key][2][:, j] = excl
    out = {}
    for key in keys:
        mode = "MFDFA" if isinstance(key, str) else "MFCCA"
        vals, used, excl = acc[key]
        out[key] = FluctuationSurface(mode, q.copy(), scales.copy(), vals, used, excl, cfg)
    return out


def mfdfa(x, cfg: AnalysisConfig | None = None) -> FluctuationSurface:
    """Multifractal detrended fluctuation analysis of one series.

    Returns the surface of F_q(s) = [mean over boxes of (f2)^(q/2)]^(1/q).
    """
    cfg = cfg or AnalysisConfig()
    return fluctuation_surfaces({"x": x}, cfg, autos=["x"])["x"]


def mfcca(x, y, cfg: AnalysisConfig | None = None) -> FluctuationSurface:
    """Sign-preserving multifractal detrended cross-correlation analysis.

    Box covariances keep their sign: each box contributes
    ``sign(f2) * |f2|**(q/2)`` and the mean M gives
    ``F_qXY = sign(M) * |M|**(1/q)``. At q = 2 this is the DCCA fluctuation
    function; with ``y = x`` it equals :func:`mfdfa` exactly.
    """
    cfg = cfg or AnalysisConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"series lengths differ: {x.size} vs {y.size}")
    return fluctuation_surfaces({"x": x, "y": y}, cfg, pairs=[("x", "y")])[("x", "y")]
