"""Tick files to per-interval returns, volatility, trading activity and volume."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from decimal import Decimal, InvalidOperation, localcontext
from enum import Enum
from typing import Iterable, Sequence
from zoneinfo import ZoneInfo

import numpy as np

from .errors import ConfigError, DataError, TickFormatError

log = logging.getLogger(__name__)

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
_US = timedelta(microseconds=1)


class Kind(str, Enum):
    RETURN = "R"
    VOLATILITY = "|R|"
    ACTIVITY = "T"
    VOLUME = "V"

    @property
    def unsigned(self) -> bool:
        return self is not Kind.RETURN

    @classmethod
    def parse(cls, text: str) -> "Kind":
        aliases = {"r": cls.RETURN, "|r|": cls.VOLATILITY, "t": cls.ACTIVITY, "v": cls.VOLUME,
                   "return": cls.RETURN, "volatility": cls.VOLATILITY, "activity": cls.ACTIVITY,
                   "volume": cls.VOLUME}
        try:
            return aliases[text.strip().lower()]
        except KeyError:
            raise ConfigError(f"unknown quantity {text!r}") from None


@dataclass(frozen=True)
class TickRecord:
    timestamp: datetime
    price: Decimal
    shares: int


_DELIMITERS = {"comma": ",", "semicolon": ";", "tab": "\t", "space": " ", "pipe": "|"}


@dataclass(frozen=True)
class TickFormat:
    """Column layout of a delimited tick file.

    Columns are header names, or zero-based indices when ``header`` is False.
    ``time_format`` is ``"iso"``, ``"epoch"`` (seconds, fractional allowed) or a
    ``strptime`` pattern. Naive timestamps are read in ``tz``.
    """

    delimiter: str = ","
    timestamp: str | int = "timestamp"
    price: str | int = "price"
    shares: str | int = "shares"
    time_format: str = "iso"
    tz: str = "America/New_York"
    header: bool = True
    max_bad_fraction: float = 0.01

    @classmethod
    def parse(cls, spec: str) -> "TickFormat":
        """Build a format from ``key=value`` pairs separated by commas.

        Example: ``delimiter=semicolon,header=no,timestamp=0,price=1,shares=2,time=epoch``.
        """
        kwargs = {}
        for part in filter(None, (p.strip() for p in spec.split(","))):
            key, _, value = part.partition("=")
            key = key.strip().lower()
            value = value.strip()
            if key == "delimiter":
                kwargs["delimiter"] = _DELIMITERS.get(value, value)
            elif key in ("timestamp", "price", "shares"):
                kwargs[key] = int(value) if value.isdigit() else value
            elif key in ("time", "time_format"):
                kwargs["time_format"] = value
            elif key == "tz":
                kwargs["tz"] = value
            elif key == "header":
                kwargs["header"] = value.lower() in ("1", "yes", "true", "on")
            elif key == "max_bad":
                kwargs["max_bad_fraction"] = float(value)
            else:
                raise ConfigError(f"unknown format key {key!r}")
        return cls(**kwargs)


@dataclass
class ParsedTicks:
    """Sorted tick records plus the malformed-line report."""

    records: list[TickRecord]
    lines: int = 0
    malformed: int = 0
    first_malformed: tuple[int, str] | None = None

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]


def _timestamp_parser(fmt: TickFormat):
    zone = ZoneInfo(fmt.tz)

    def localize(dt: datetime) -> datetime:
        return dt.replace(tzinfo=zone) if dt.tzinfo is None else dt

    if fmt.time_format == "iso":
        def from_iso(text):
            if text.endswith(("Z", "z")):
                text = text[:-1] + "+00:00"
            return localize(datetime.fromisoformat(text))
        return from_iso
    if fmt.time_format == "epoch":
        def from_epoch(text):
            sec = Decimal(text)
            if not sec.is_finite():
                raise ValueError("non-finite epoch")
            return _EPOCH + timedelta(microseconds=int(sec * 1_000_000))
        return from_epoch
    pattern = fmt.time_format
    return lambda text: localize(datetime.strptime(text, pattern))


def _parse_line(row, cols, parse_ts) -> TickRecord:
    ts = parse_ts(row[cols[0]].strip())
    price = Decimal(row[cols[1]].strip())
    if not price.is_finite() or price <= 0:
        raise ValueError(f"price must be positive, got {row[cols[1]]!r}")
    shares_d = Decimal(row[cols[2]].strip())
    if not shares_d.is_finite() or shares_d != shares_d.to_integral_value() or shares_d <= 0:
        raise ValueError(f"shares must be a positive integer, got {row[cols[2]]!r}")
    return TickRecord(ts, price, int(shares_d))


def parse_ticks(stream, fmt: TickFormat | None = None) -> ParsedTicks:
    """Read tick records from a text or byte stream and sort them by time.

    Lines that fail to parse or violate price > 0 / shares > 0 are counted.
    If more than ``fmt.max_bad_fraction`` of data lines are malformed a
    :class:`TickFormatError` names the first one. Ties in time keep file order.
    """
    fmt = fmt or TickFormat()
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    if isinstance(stream, io.BufferedIOBase) or "b" in getattr(stream, "mode", ""):
        stream = io.TextIOWrapper(stream, encoding="utf-8", newline="")
    reader = csv.reader(stream, delimiter=fmt.delimiter)
    parse_ts = _timestamp_parser(fmt)
    result = ParsedTicks([])
    cols = None
    if fmt.header:
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            return result
        try:
            cols = tuple(c if isinstance(c, int) else header.index(c)
                         for c in (fmt.timestamp, fmt.price, fmt.shares))
        except ValueError as exc:
            raise TickFormatError(f"missing column in header {header}: {exc}") from None
    else:
        cols = tuple(int(c) for c in (fmt.timestamp, fmt.price, fmt.shares))
    records = []
    for row in reader:
        if not row or all(not cell.strip() for cell in row):
            continue
        result.lines += 1
        try:
            records.append(_parse_line(row, cols, parse_ts))
        except (ValueError, IndexError, InvalidOperation, OverflowError) as exc:
            result.malformed += 1
            if result.first_malformed is None:
                line_no = reader.line_num
                result.first_malformed = (line_no, f"{fmt.delimiter.join(row)} ({exc})")
    if result.lines and result.malformed / result.lines > fmt.max_bad_fraction:
        line_no, text = result.first_malformed
        raise TickFormatError(f"{result.malformed} of {result.lines} lines malformed; "
                              f"first at line {line_no}: {text}")
    if result.malformed:
        log.warning("skipped %d malformed tick lines (first at line %d)",
                    result.malformed, result.first_malformed[0])
    records.sort(key=lambda r: r.timestamp)
    result.records = records
    return result


def _hhmm(text: str) -> time:
    try:
        return datetime.strptime(text.strip(), "%H:%M").time()
    except ValueError:
        raise ConfigError(f"bad time {text!r}, expected HH:MM") from None


def parse_session(text: str) -> tuple[time, time]:
    """``"09:30-16:00"`` -> (open, close)."""
    start, sep, end = text.partition("-")
    if not sep:
        raise ConfigError(f"bad session {text!r}, expected HH:MM-HH:MM")
    return _hhmm(start), _hhmm(end)


@dataclass(frozen=True)
class SessionCalendar:
    """Trading days, the regular session and the interval length.

    ``overrides`` maps days with a non-regular session (half days) to their
    (open, close); such days fail the full-grid check and are left out of
    the aggregated series.
    """

    days: tuple[date, ...]
    open: time = time(9, 30)
    close: time = time(16, 0)
    dt_minutes: int = 1
    tz: str = "America/New_York"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dt_minutes <= 0:
            raise ConfigError("interval length must be positive")
        minutes = self.session_minutes
        if minutes <= 0:
            raise ConfigError("session close must follow open")
        if minutes % self.dt_minutes:
            raise ConfigError(f"session of {minutes} min is not a multiple of dt={self.dt_minutes} min")
        object.__setattr__(self, "days", tuple(sorted(set(self.days))))

    @property
    def session_minutes(self) -> int:
        return (self.close.hour * 60 + self.close.minute) - (self.open.hour * 60 + self.open.minute)

    @property
    def slots_per_day(self) -> int:
        return self.session_minutes // self.dt_minutes

    def window(self, day: date) -> tuple[int, int]:
        """Session bounds of ``day`` as UTC epoch microseconds, half-open."""
        zone = ZoneInfo(self.tz)
        start = datetime.combine(day, self.open, zone)
        end = datetime.combine(day, self.close, zone)
        return (start - _EPOCH) // _US, (end - _EPOCH) // _US

    def with_dt(self, dt_minutes: int) -> "SessionCalendar":
        return SessionCalendar(self.days, self.open, self.close, dt_minutes, self.tz, dict(self.overrides))

    @classmethod
    def from_lines(cls, lines: Iterable[str], **kwargs) -> "SessionCalendar":
        """Calendar file: one ``YYYY-MM-DD`` per line, optionally followed by an
        ``HH:MM-HH:MM`` session override. ``#`` starts a comment."""
        days, overrides = [], {}
        for raw in lines:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                day = date.fromisoformat(parts[0])
            except ValueError:
                raise ConfigError(f"bad calendar date {parts[0]!r}") from None
            days.append(day)
            if len(parts) > 1:
                overrides[day] = parse_session(parts[1])
        return cls(tuple(days), overrides=overrides, **kwargs)

    @classmethod
    def from_ticks(cls, ticks: Sequence[TickRecord], **kwargs) -> "SessionCalendar":
        tz = ZoneInfo(kwargs.get("tz", "America/New_York"))
        days = {r.timestamp.astimezone(tz).date() for r in ticks}
        return cls(tuple(days), **kwargs)


@dataclass(frozen=True)
class QuantitySeries:
    """One aggregated quantity on a day-major interval grid (L = days x slots)."""

    kind: Kind
    values: np.ndarray
    days: tuple[date, ...]
    slots_per_day: int
    dt_minutes: int
    instrument: str = ""
    detrended: bool = False
    zero_slots: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise DataError("series values must be one-dimensional")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def length(self) -> int:
        return int(self.values.size)

    def by_day(self) -> np.ndarray:
        return self.values.reshape(-1, self.slots_per_day)


@dataclass(frozen=True)
class QuantityBundle:
    """The four series built from one instrument plus the aggregation report."""

    returns: QuantitySeries
    volatility: QuantitySeries
    activity: QuantitySeries
    volume: QuantitySeries
    outside_session: int = 0
    dropped_days: tuple[date, ...] = ()
    partial_days: tuple[date, ...] = ()

    def __getitem__(self, kind) -> QuantitySeries:
        if not isinstance(kind, Kind):
            kind = Kind(kind) if kind in Kind._value2member_map_ else Kind.parse(kind)
        return {Kind.RETURN: self.returns, Kind.VOLATILITY: self.volatility,
                Kind.ACTIVITY: self.activity, Kind.VOLUME: self.volume}[kind]

    @property
    def length(self) -> int:
        return self.returns.length


class _LogPrices:
    # Equal decimal prices map to the same float, so unchanged prices give exact zero returns.
    def __init__(self):
        self._cache = {}

    def __call__(self, price: Decimal) -> float:
        key = price.normalize()
        val = self._cache.get(key)
        if val is None:
            with localcontext() as ctx:
                ctx.prec = 34
                val = float(key.ln())
            self._cache[key] = val
        return val


def aggregate(ticks: Sequence[TickRecord], cal: SessionCalendar, instrument: str = "",
              include_overnight: bool = False) -> QuantityBundle:
    """Aggregate sorted ticks into per-interval R, |R|, T and V.

    Intervals are half-open ``[start, end)``. The price is carried forward
    between trades; each day's opening reference is its first trade unless
    ``include_overnight`` links it to the previous kept day's close. Days
    without trades, and days with a session override, are left out.
    """
    n = len(ticks)
    stamps = np.fromiter(((r.timestamp - _EPOCH) // _US for r in ticks), dtype=np.int64, count=n)
    if n > 1 and np.any(np.diff(stamps) < 0):
        raise DataError("ticks must be sorted by timestamp")
    shares = np.fromiter((r.shares for r in ticks), dtype=np.int64, count=n)
    logp = _LogPrices()
    logs = np.fromiter((logp(r.price) for r in ticks), dtype=np.float64, count=n)
    S = cal.slots_per_day
    dt_us = cal.dt_minutes * 60_000_000
    returns, acts, vols, kept, dropped, partial = [], [], [], [], [], []
    inside = 0
    prev_close = None
    for day in cal.days:
        start, end = cal.window(day)
        lo, hi = np.searchsorted(stamps, [start, end], side="left")
        if day in cal.overrides:
            partial.append(day)
            inside += hi - lo
            continue
        if hi == lo:
            log.warning("%s: no trades on %s, day dropped", instrument or "series", day)
            dropped.append(day)
            continue
        inside += hi - lo
        slot = (stamps[lo:hi] - start) // dt_us
        t = np.bincount(slot, minlength=S)
        v = np.zeros(S, dtype=np.int64)
        np.add.at(v, slot, shares[lo:hi])
        last = np.flatnonzero(np.append(np.diff(slot) != 0, True))
        end_log = np.full(S, np.nan)
        end_log[slot[last]] = logs[lo:hi][last]
        seed = logs[lo]
        if include_overnight and prev_close is not None:
            seed = prev_close
        filled = _forward_fill(end_log, logs[lo])
        prev = np.concatenate([[seed], filled[:-1]])
        r = filled - prev
        returns.append(r)
        acts.append(t)
        vols.append(v)
        kept.append(day)
        prev_close = filled[-1]
    outside = n - inside
    if outside:
        log.info("%s: %d ticks outside session windows filtered", instrument or "series", outside)
    if not kept:
        raise DataError(f"{instrument or 'series'}: no trading day with in-session trades")
    R = np.concatenate(returns)
    meta = dict(days=tuple(kept), slots_per_day=S, dt_minutes=cal.dt_minutes, instrument=instrument)
    return QuantityBundle(
        QuantitySeries(Kind.RETURN, R, **meta),
        QuantitySeries(Kind.VOLATILITY, np.abs(R), **meta),
        QuantitySeries(Kind.ACTIVITY, np.concatenate(acts), **meta),
        QuantitySeries(Kind.VOLUME, np.concatenate(vols), **meta),
        outside_session=int(outside),
        dropped_days=tuple(dropped),
        partial_days=tuple(partial),
    )


def _forward_fill(values: np.ndarray, seed: float) -> np.ndarray:
    # Leading gaps take the seed (the day's first trade price).
    ok = ~np.isnan(values)
    idx = np.where(ok, np.arange(values.size), -1)
    np.maximum.accumulate(idx, out=idx)
    out = np.where(idx >= 0, values[np.maximum(idx, 0)], seed)
    return out
