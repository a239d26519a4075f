import datetime as dt
from pathlib import Path

import numpy as np
import pytest

SESSION_OPEN = dt.time(9, 30)


def trading_days(n, start=dt.date(2010, 1, 4)):
    days, d = [], start
    while len(days) < n:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def write_ticks(path, days, slots, log_price, shares, per_slot=1, dt_minutes=1, rng=None):
    """Write a tick file with ``per_slot`` trades in every interval.

    ``log_price`` and ``shares`` have shape (len(days) * slots, per_slot); the
    last trade of each interval sets its closing price.
    """
    rng = rng or np.random.default_rng(0)
    step = dt_minutes * 60
    # offsets strictly inside the interval, increasing
    offs = np.sort(rng.integers(1, step, size=(len(days) * slots, per_slot)), axis=1)
    prices = np.round(np.exp(log_price), 6)
    lines = ["timestamp,price,shares"]
    for d_i, day in enumerate(days):
        base = dt.datetime.combine(day, SESSION_OPEN)
        for j in range(slots):
            k = d_i * slots + j
            t0 = base + dt.timedelta(seconds=j * step)
            for n in range(per_slot):
                ts = t0 + dt.timedelta(seconds=int(offs[k, n]))
                lines.append(f"{ts.isoformat()},{prices[k, n]:.6f},{int(shares[k, n])}")
    Path(path).write_text("\n".join(lines) + "\n")
    return path


def fgn_tick_file(path, increments, days, slots, per_slot=1, seed=0, scale=1e-3):
    """Ticks whose interval-to-interval log price change is ``scale * increments``."""
    rng = np.random.default_rng(seed)
    L = len(days) * slots
    lp = np.log(100.0) + np.cumsum(scale * np.asarray(increments[:L]))
    log_price = np.repeat(lp[:, None], per_slot, axis=1)
    shares = rng.integers(1, 500, size=(L, per_slot)) * 100
    return write_ticks(path, days, slots, log_price, shares, per_slot, rng=rng)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def activity_tick_file(path, days, slots, seed=0, hurst=0.7):
    """Ticks with a long-memory trade rate; volume follows the number of trades."""
    from fractalis.surrogates import SurrogateSpec, generate

    rng = np.random.default_rng(seed)
    L = len(days) * slots
    rate = 4.0 * np.exp(0.5 * generate(SurrogateSpec("fgn", L, seed, hurst=hurst)))
    counts = 1 + rng.poisson(rate)
    lines = ["timestamp,price,shares"]
    lp = np.log(100.0)
    for d_i, day in enumerate(days):
        base = dt.datetime.combine(day, SESSION_OPEN)
        for j in range(slots):
            n = counts[d_i * slots + j]
            offs = np.sort(rng.integers(0, 60, n))
            for k in range(n):
                lp += rng.normal(0, 2e-4)
                ts = base + dt.timedelta(seconds=j * 60 + int(offs[k]))
                lines.append(f"{ts.isoformat()},{np.exp(lp):.4f},{int(rng.integers(1, 50)) * 100}")
    Path(path).write_text("\n".join(lines) + "\n")
    return path
