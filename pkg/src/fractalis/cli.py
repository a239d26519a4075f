"""Command-line entry point: ``fractalis {ingest,analyze,joined,gen,spectrum}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import tables
from .errors import FractalisError
from .pipeline import (RunConfig, _CONFIG_KEYS, load_instrument, parse_fit_range, prepared_series,
                       read_config_file, run_batch, run_joined, write_joined, write_manifest)
from .scaling import fit_exponents, mask_negative
from .surrogates import Family, SurrogateSpec, generate

log = logging.getLogger("fractalis")


def _inputs(items):
    out = []
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        out.append((name, path))
    return tuple(out)


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("inputs", nargs="*", help="tick files, optionally as ID=path")
    p.add_argument("--config", help="flat key = value config file; command-line flags win")
    p.add_argument("--dt", help="interval length in minutes")
    p.add_argument("--session", help="regular session, HH:MM-HH:MM (exchange-local)")
    p.add_argument("--calendar", help="file listing trading dates")
    p.add_argument("--format", help="tick format, e.g. delimiter=comma,timestamp=time,time=iso")
    p.add_argument("--detrend", choices=["on", "off"], help="daily-pattern removal for |R|, T, V")
    p.add_argument("--include-overnight", action="store_const", const="on",
                   help="first interval of a day starts from the previous close")
    p.add_argument("--no-demean", dest="demean", action="store_const", const="off",
                   help="integrate the raw series instead of its deviations from the mean")
    p.add_argument("--q", help="q grid: lo:hi:step or comma list (default -4:4:0.5)")
    p.add_argument("--m", help="detrending polynomial degree (default 2)")
    p.add_argument("--scales", help="explicit comma-separated box sizes")
    p.add_argument("--n-scales", help="number of geometric scales (default 30)")
    p.add_argument("--pairs", help="e.g. R:V,|R|:T,|R|:V,T:V,R:|R|,R:T")
    p.add_argument("--fit-range", help="s_lo:s_hi")
    p.add_argument("--quality-gate", help="minimum R^2 for a reported exponent (default 0.98)")
    p.add_argument("--jobs", help="worker processes")
    p.add_argument("--out", help="output directory")
    p.add_argument("--manifest", help="manifest path (default <out>/manifest.json)")


def build_config(args) -> RunConfig:
    kwargs = read_config_file(args.config) if args.config else {}
    for key, (name, conv) in _CONFIG_KEYS.items():
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            kwargs[name] = conv(value)
    if args.inputs:
        kwargs["inputs"] = _inputs(args.inputs)
    return RunConfig(**kwargs)


def cmd_ingest(args) -> int:
    cfg = build_config(args)
    out = Path(cfg.out_dir)
    statuses = []
    for name, path in cfg.inputs:
        try:
            bundle = load_instrument(cfg, name, path)
            series, patterns = prepared_series(bundle, cfg.detrend)
        except (FractalisError, OSError) as exc:
            log.error("%s failed: %s", name, exc)
            statuses.append((name, "failed", f"{type(exc).__name__}: {exc}", []))
            continue
        directory = out / name
        directory.mkdir(parents=True, exist_ok=True)
        S = bundle.returns.slots_per_day
        rows = ((name, kind.value, s.days[i // S].isoformat(), i % S, tables.fmt(v))
                for kind, s in series.items() for i, v in enumerate(s.values))
        files = [directory / "series.csv", directory / "patterns.csv"]
        tables.write_table(files[0], ("instrument", "kind", "day", "slot", "value"), rows)
        tables.write_table(files[1], ("instrument", "kind", "slot", "D"),
                           ((name, k.value, j, tables.fmt(v)) for k, p in patterns.items() for j, v in p.rows()))
        print(f"{name}: L={bundle.length} days={len(bundle.returns.days)} slots/day={S} "
              f"outside_session={bundle.outside_session} dropped_days={len(bundle.dropped_days)} "
              f"partial_days={len(bundle.partial_days)}")
        statuses.append((name, "ok", "", [str(f) for f in files]))
    write_manifest(args.manifest or out / "manifest.json", cfg, statuses)
    return 0 if any(s[1] == "ok" for s in statuses) else 1


def cmd_analyze(args) -> int:
    cfg = build_config(args)
    manifest = run_batch(cfg, args.manifest)
    failed = [i["instrument"] for i in manifest["inputs"] if i["status"] != "ok"]
    print(f"{len(manifest['inputs']) - len(failed)} ok, {len(failed)} failed; "
          f"{len(manifest['files'])} files in {cfg.out_dir}")
    return 0 if not failed else 2


def cmd_joined(args) -> int:
    cfg = build_config(args)
    joined = run_joined(cfg)
    write_joined(joined, cfg, args.manifest)
    pair = next(k for k in joined.analysis.spectra if isinstance(k, tuple))
    spec = joined.analysis.spectra[pair]
    print(f"L^(N)={joined.activity.length} instruments={len(joined.activity.instruments)} "
          f"lambda defined at {int(spec.defined.sum())}/{spec.q.size} q, delta={spec.width:.4f}")
    return 0


def cmd_gen(args) -> int:
    spec = SurrogateSpec(Family(args.family), length=args.length, seed=args.seed, hurst=args.hurst,
                         weight=args.weight, base=Family(args.base) if args.base else None,
                         coupling=args.coupling, shuffled=args.shuffled)
    data = generate(spec)
    if isinstance(data, tuple):
        columns, rows = ("x", "y"), ((tables.fmt(a), tables.fmt(b)) for a, b in zip(*data))
    else:
        columns, rows = ("x",), ((tables.fmt(a),) for a in data)
    tables.write_table(args.out, columns, rows)
    return 0


def cmd_spectrum(args) -> int:
    surfaces = tables.read_surfaces(args.surfaces)
    fit_range = parse_fit_range(args.fit_range) if args.fit_range else None
    rows, summary = [], []
    for (instrument, pair), surf in surfaces.items():
        if surf.mode == "MFCCA":
            surf = mask_negative(surf)
        spec = fit_exponents(surf, fit_range, args.quality_gate)
        rows.extend(tables.spectrum_rows(instrument, pair, spec))
        summary.append(tables.summary_row(instrument, pair, spec))
        print(f"{instrument} {pair} {spec.kind}: delta={spec.width:.4f} "
              f"defined={int(spec.defined.sum())}/{spec.q.size} fit_range={spec.fit_range[0]}:{spec.fit_range[1]}")
    tables.write_table(args.out, tables.SPECTRUM_COLUMNS, rows)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fractalis", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="aggregate tick files into R, |R|, T, V series")
    _add_run_options(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("analyze", help="MFDFA and MFCCA of each instrument")
    _add_run_options(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("joined", help="MFCCA of T and V joined across instruments")
    _add_run_options(p)
    p.set_defaults(func=cmd_joined)

    p = sub.add_parser("gen", help="write a surrogate series")
    p.add_argument("--family", required=True, choices=[f.value for f in Family])
    p.add_argument("--hurst", type=float, default=0.5)
    p.add_argument("--weight", type=float, default=0.75)
    p.add_argument("--length", type=int, default=1 << 14)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base", choices=[f.value for f in Family if f is not Family.COUPLED])
    p.add_argument("--coupling", type=float, default=0.0)
    p.add_argument("--shuffled", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("spectrum", help="fit exponents to an exported surface table")
    p.add_argument("surfaces")
    p.add_argument("--fit-range")
    p.add_argument("--quality-gate", type=float, default=0.98)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrum)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FractalisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
