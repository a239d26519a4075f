"""Batch driver: ticks -> quantities -> daily detrending -> surfaces -> spectra -> tables."""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tables
from .errors import BatchError, ConfigError
from .fractal import DEFAULT_Q, AnalysisConfig, fluctuation_surfaces
from .ingest import Kind, QuantityBundle, SessionCalendar, TickFormat, aggregate, parse_session, parse_ticks
from .scaling import JoinedSeries, QUALITY_GATE, average_hurst, fit_exponents, join_series, mask_negative
from .seasonality import daily_pattern, detrend_daily

log = logging.getLogger(__name__)

KINDS = (Kind.RETURN, Kind.VOLATILITY, Kind.ACTIVITY, Kind.VOLUME)
ALL_PAIRS = ((Kind.RETURN, Kind.VOLUME), (Kind.VOLATILITY, Kind.ACTIVITY), (Kind.VOLATILITY, Kind.VOLUME),
             (Kind.ACTIVITY, Kind.VOLUME), (Kind.RETURN, Kind.VOLATILITY), (Kind.RETURN, Kind.ACTIVITY))


def parse_pairs(text: str) -> tuple[tuple[Kind, Kind], ...]:
    """``"R:V,|R|:T"`` -> ((R, V), (|R|, T))."""
    pairs = []
    for item in filter(None, (p.strip() for p in text.split(","))):
        a, sep, b = item.rpartition(":")
        if not sep or not a:
            raise ConfigError(f"bad pair {item!r}, expected X:Y")
        x, y = Kind.parse(a), Kind.parse(b)
        if x is y:
            raise ConfigError(f"pair {item!r} repeats one quantity")
        pairs.append((x, y))
    return tuple(pairs)


def parse_q(text: str) -> tuple[float, ...]:
    """``"-4:4:0.5"`` (inclusive range) or a comma list."""
    text = text.strip()
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return tuple(float(v) for v in np.round(lo + step * np.arange(n), 10))
    return tuple(float(v) for v in text.split(","))


def parse_fit_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ConfigError(f"bad fit range {text!r}, expected s_lo:s_hi")
    return int(lo), int(hi)


def pair_label(pair) -> str:
    return f"{pair[0].value}:{pair[1].value}"


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch run needs. ``inputs`` holds (instrument id, tick file) pairs."""

    inputs: tuple[tuple[str, str], ...] = ()
    dt_minutes: int = 1
    session: tuple[time, time] = (time(9, 30), time(16, 0))
    calendar: str | None = None
    tick_format: TickFormat = field(default_factory=TickFormat)
    q: tuple[float, ...] = DEFAULT_Q
    m: int = 2
    scales: tuple[int, ...] | None = None
    n_scales: int = 30
    pairs: tuple[tuple[Kind, Kind], ...] = ALL_PAIRS
    detrend: bool = True
    demean: bool = True
    include_overnight: bool = False
    fit_range: tuple[int, int] | None = None
    quality_gate: float = QUALITY_GATE
    out_dir: str = "out"
    jobs: int = 1

    def __post_init__(self):
        if not self.pairs:
            raise ConfigError("pair list is empty")
        for pair in self.pairs:
            if len(pair) != 2 or not all(isinstance(k, Kind) for k in pair):
                raise ConfigError(f"bad pair {pair!r}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    @property
    def analysis(self) -> AnalysisConfig:
        return AnalysisConfig(m=self.m, q=self.q, scales=self.scales, n_scales=self.n_scales, demean=self.demean)

    def calendar_for(self, ticks) -> SessionCalendar:
        kwargs = dict(open=self.session[0], close=self.session[1], dt_minutes=self.dt_minutes,
                      tz=self.tick_format.tz)
        if self.calendar:
            with open(self.calendar, encoding="utf-8") as fh:
                return SessionCalendar.from_lines(fh, **kwargs)
        return SessionCalendar.from_ticks(ticks, **kwargs)


_CONFIG_KEYS = {
    "dt": ("dt_minutes", int),
    "session": ("session", parse_session),
    "calendar": ("calendar", str),
    "format": ("tick_format", TickFormat.parse),
    "q": ("q", parse_q),
    "m": ("m", int),
    "scales": ("scales", lambda v: tuple(int(s) for s in v.split(","))),
    "n-scales": ("n_scales", int),
    "pairs": ("pairs", parse_pairs),
    "detrend": ("detrend", lambda v: v.strip().lower() in ("on", "1", "yes", "true")),
    "demean": ("demean", lambda v: v.strip().lower() in ("on", "1", "yes", "true")),
    "include-overnight": ("include_overnight", lambda v: v.strip().lower() in ("on", "1", "yes", "true")),
    "fit-range": ("fit_range", parse_fit_range),
    "quality-gate": ("quality_gate", float),
    "out": ("out_dir", str),
    "jobs": ("jobs", int),
}


def read_config_file(path) -> dict:
    """Flat ``key = value`` file -> RunConfig keyword arguments."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    with open(path, encoding="utf-8") as fh:
        parser.read_string("[run]\n" + fh.read())
    out = {}
    for key, value in parser["run"].items():
        key = key.replace("_", "-")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        name, conv = _CONFIG_KEYS[key]
        out[name] = conv(value)
    return out


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_instrument(cfg: RunConfig, instrument: str, path) -> QuantityBundle:
    with open(path, "rb") as fh:
        ticks = parse_ticks(fh, cfg.tick_format)
    cal = cfg.calendar_for(ticks.records)
    return aggregate(ticks.records, cal, instrument=instrument, include_overnight=cfg.include_overnight)


def prepared_series(bundle: QuantityBundle, detrend: bool = True):
    """Analysis inputs per kind: returns untouched, |R|, T, V divided by their daily pattern."""
    out, patterns = {}, {}
    for kind in KINDS:
        series = bundle[kind]
        if detrend and kind.unsigned:
            pattern = daily_pattern(series)
            patterns[kind] = pattern
            series = detrend_daily(series, pattern)
        out[kind] = series
    return out, patterns


@dataclass
class AnalysisResult:
    instrument: str
    length: int
    surfaces: dict
    spectra: dict
    h_xy: dict
    patterns: dict = field(default_factory=dict)


def analyze_series(instrument: str, series: dict, kinds: Sequence[Kind], pairs: Sequence[tuple[Kind, Kind]],
                   cfg: RunConfig) -> AnalysisResult:
    """MFDFA for ``kinds`` and masked MFCCA for ``pairs``, then exponent fits."""
    arrays = {k: np.asarray(series[k].values if hasattr(series[k], "values") else series[k], dtype=np.float64)
              for k in {*kinds, *(k for p in pairs for k in p)}}
    autos = list(dict.fromkeys([*kinds, *(k for p in pairs for k in p)]))
    surfaces = fluctuation_surfaces(arrays, cfg.analysis, autos=autos, pairs=list(pairs))
    for pair in pairs:
        surfaces[pair] = mask_negative(surfaces[pair])
    spectra = {key: fit_exponents(surf, cfg.fit_range, cfg.quality_gate) for key, surf in surfaces.items()}
    h_xy = {pair: average_hurst(spectra[pair[0]], spectra[pair[1]]) for pair in pairs}
    length = next(iter(arrays.values())).size
    return AnalysisResult(instrument, length, surfaces, spectra, h_xy)


def run_single(cfg: RunConfig, instrument: str, path) -> AnalysisResult:
    """Full analysis of one instrument: 4 MFDFA surfaces plus the configured MFCCA pairs."""
    bundle = load_instrument(cfg, instrument, path)
    series, patterns = prepared_series(bundle, cfg.detrend)
    result = analyze_series(instrument, series, KINDS, cfg.pairs, cfg)
    result.patterns = patterns
    return result


def _label(key) -> str:
    return key.value if isinstance(key, Kind) else pair_label(key)


def write_result(result: AnalysisResult, directory: Path) -> list[Path]:
    """Surface, spectrum, summary and pattern tables for one result."""
    directory.mkdir(parents=True, exist_ok=True)
    name = result.instrument
    keys = list(result.surfaces)
    files = []
    path = directory / "surfaces.csv"
    tables.write_table(path, tables.SURFACE_COLUMNS,
                       (row for key in keys for row in tables.surface_rows(name, _label(key), result.surfaces[key])))
    files.append(path)
    path = directory / "spectra.csv"
    tables.write_table(path, tables.SPECTRUM_COLUMNS,
                       (row for key in keys
                        for row in tables.spectrum_rows(name, _label(key), result.spectra[key], result.h_xy.get(key))))
    files.append(path)
    path = directory / "summary.csv"
    tables.write_table(path, tables.SUMMARY_COLUMNS,
                       [tables.summary_row(name, _label(key), result.spectra[key]) for key in keys])
    files.append(path)
    if result.patterns:
        path = directory / "patterns.csv"
        tables.write_table(path, ("instrument", "kind", "slot", "D"),
                           ((name, kind.value, j, tables.fmt(v)) for kind, pat in result.patterns.items()
                            for j, v in pat.rows()))
        files.append(path)
    return files


def _single_job(args):
    cfg, instrument, path = args
    try:
        result = run_single(cfg, instrument, path)
        files = write_result(result, Path(cfg.out_dir) / instrument)
        return instrument, "ok", "", [str(f) for f in files]
    except Exception as exc:  # isolate per-instrument failures
        log.error("%s failed: %s", instrument, exc)
        return instrument, "failed", f"{type(exc).__name__}: {exc}", []


def _map(func, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(jobs, len(items))) as pool:
        return list(pool.map(func, items))


def write_manifest(path, cfg: RunConfig, statuses, extra_files=()) -> dict:
    """JSON list of every input (with hash and status) and every emitted file."""
    inputs = []
    for (instrument, src), (_, status, error, _files) in zip(cfg.inputs, statuses):
        entry = {"instrument": instrument, "path": str(src), "status": status}
        if os.path.exists(src):
            entry["sha256"] = sha256_file(src)
        if error:
            entry["error"] = error
        inputs.append(entry)
    emitted = [f for *_, files in statuses for f in files] + [str(f) for f in extra_files]
    out_root = Path(cfg.out_dir)
    manifest = {
        "inputs": inputs,
        "files": [{"path": os.path.relpath(f, out_root), "sha256": sha256_file(f)} for f in emitted],
        "config": {"dt_minutes": cfg.dt_minutes, "m": cfg.m, "q": list(cfg.q),
                   "pairs": [pair_label(p) for p in cfg.pairs], "detrend": cfg.detrend,
                   "demean": cfg.demean, "include_overnight": cfg.include_overnight,
                   "fit_range": list(cfg.fit_range) if cfg.fit_range else None,
                   "quality_gate": cfg.quality_gate},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def run_batch(cfg: RunConfig, manifest_path=None) -> dict:
    """run_single over every input; one failing file never stops the others."""
    statuses = _map(_single_job, [(cfg, name, path) for name, path in cfg.inputs], cfg.jobs)
    if cfg.inputs and all(s[1] != "ok" for s in statuses):
        write_manifest(manifest_path or Path(cfg.out_dir) / "manifest.json", cfg, statuses)
        raise BatchError("every instrument failed")
    return write_manifest(manifest_path or Path(cfg.out_dir) / "manifest.json", cfg, statuses)


def _joined_job(args):
    cfg, instrument, path = args
    try:
        bundle = load_instrument(cfg, instrument, path)
        series, _ = prepared_series(bundle, cfg.detrend)
        return instrument, "ok", "", (series[Kind.ACTIVITY], series[Kind.VOLUME])
    except Exception as exc:
        log.error("%s failed: %s", instrument, exc)
        return instrument, "failed", f"{type(exc).__name__}: {exc}", None


@dataclass
class JoinedResult:
    analysis: AnalysisResult
    activity: JoinedSeries
    volume: JoinedSeries
    statuses: list

    @property
    def flattening_scales(self) -> np.ndarray:
        """Scales above the shortest per-instrument length, where flattening is expected."""
        scales = next(iter(self.analysis.surfaces.values())).scales
        return scales[scales > self.activity.min_segment]


def run_joined(cfg: RunConfig, pair: tuple[Kind, Kind] = (Kind.ACTIVITY, Kind.VOLUME)) -> JoinedResult:
    """Concatenate detrended T and V across instruments (input order) and analyze the pair."""
    loaded = _map(_joined_job, [(cfg, name, path) for name, path in cfg.inputs], cfg.jobs)
    ok = [item for item in loaded if item[1] == "ok"]
    if not ok:
        raise BatchError("every instrument failed")
    activity = join_series([item[3][0] for item in ok], [item[0] for item in ok])
    volume = join_series([item[3][1] for item in ok], [item[0] for item in ok])
    result = analyze_joined(activity, volume, cfg, pair)
    statuses = [(name, status, error, []) for name, status, error, _ in loaded]
    return JoinedResult(result, activity, volume, statuses)


def analyze_joined(activity: JoinedSeries, volume: JoinedSeries, cfg: RunConfig,
                   pair: tuple[Kind, Kind] = (Kind.ACTIVITY, Kind.VOLUME)) -> AnalysisResult:
    series = {pair[0]: activity.values, pair[1]: volume.values}
    return analyze_series("joined", series, pair, [pair], cfg)


def write_joined(joined: JoinedResult, cfg: RunConfig, manifest_path=None) -> dict:
    directory = Path(cfg.out_dir) / "joined"
    files = write_result(joined.analysis, directory)
    seg = directory / "segments.csv"
    edges = (0, *joined.activity.boundaries)
    tables.write_table(seg, ("instrument", "start", "end"),
                       [(n, a, b) for n, a, b in zip(joined.activity.instruments, edges[:-1], edges[1:])])
    flat = directory / "flattening.csv"
    tables.write_table(flat, ("s", "beyond_min_segment"),
                       [(int(s), int(s > joined.activity.min_segment))
                        for s in next(iter(joined.analysis.surfaces.values())).scales])
    statuses = list(joined.statuses)
    return write_manifest(manifest_path or directory / "manifest.json", cfg, statuses,
                          extra_files=[*files, seg, flat])
