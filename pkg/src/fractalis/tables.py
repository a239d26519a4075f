"""Long-format delimited tables for surfaces, spectra, series and patterns."""

from __future__ import annotations

import csv
from collections import defaultdict
from typing import Iterable

import numpy as np

from .fractal import AnalysisConfig, FluctuationSurface
from .scaling import ScalingSpectrum

SURFACE_COLUMNS = ("instrument", "pair", "mode", "q", "s", "F", "sign", "boxes_used", "boxes_excluded", "masked")
SPECTRUM_COLUMNS = ("instrument", "pair", "kind", "q", "exponent", "r2", "n_scales_used", "n_masked",
                    "defined", "h_xy")
SUMMARY_COLUMNS = ("instrument", "pair", "kind", "delta", "n_defined", "n_q", "s_lo", "s_hi")


def fmt(x) -> str:
    """17 significant digits: floats survive a text round trip bit for bit."""
    x = float(x)
    if np.isnan(x):
        return "nan"
    return format(x, ".17g")


def surface_rows(instrument: str, pair: str, surface: FluctuationSurface) -> Iterable[tuple]:
    for i, q in enumerate(surface.q):
        for j, s in enumerate(surface.scales):
            val = surface.values[i, j]
            sign = 0 if np.isnan(val) else int(np.sign(val))
            yield (instrument, pair, surface.mode, fmt(q), int(s), fmt(val), sign,
                   int(surface.boxes_used[i, j]), int(surface.boxes_excluded[i, j]),
                   int(surface.masked[i, j]))


def spectrum_rows(instrument: str, pair: str, spec: ScalingSpectrum, h_xy=None) -> Iterable[tuple]:
    for i, q in enumerate(spec.q):
        hxy = "" if h_xy is None else fmt(h_xy[i])
        yield (instrument, pair, spec.kind, fmt(q), fmt(spec.exponent[i]), fmt(spec.r2[i]),
               int(spec.n_used[i]), int(spec.n_masked[i]), int(spec.defined[i]), hxy)


def summary_row(instrument: str, pair: str, spec: ScalingSpectrum) -> tuple:
    return (instrument, pair, spec.kind, fmt(spec.width), int(spec.defined.sum()), int(spec.q.size),
            spec.fit_range[0], spec.fit_range[1])


def write_table(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def read_surfaces(path, cfg: AnalysisConfig | None = None) -> dict[tuple[str, str], FluctuationSurface]:
    """Rebuild surfaces from a table written with :data:`SURFACE_COLUMNS`."""
    cells = defaultdict(list)
    modes = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["instrument"], row["pair"])
            modes[key] = row["mode"]
            cells[key].append((float(row["q"]), int(row["s"]), float(row["F"]), int(row["boxes_used"]),
                               int(row["boxes_excluded"]), row.get("masked", "0") == "1"))
    out = {}
    for key, rows in cells.items():
        qs = np.array(sorted({r[0] for r in rows}))
        ss = np.array(sorted({r[1] for r in rows}), dtype=np.int64)
        qi = {q: i for i, q in enumerate(qs)}
        si = {s: j for j, s in enumerate(ss)}
        vals = np.full((qs.size, ss.size), np.nan)
        used = np.zeros(vals.shape, dtype=np.int64)
        excl = np.zeros(vals.shape, dtype=np.int64)
        masked = np.zeros(vals.shape, dtype=bool)
        for q, s, f, u, e, mk in rows:
            i, j = qi[q], si[s]
            vals[i, j], used[i, j], excl[i, j], masked[i, j] = f, u, e, mk
        config = cfg or AnalysisConfig(q=tuple(qs), scales=tuple(int(s) for s in ss))
        out[key] = FluctuationSurface(modes[key], qs, ss, vals, used, excl, config, masked)
    return out
