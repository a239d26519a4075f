"""Synthetic series with known scaling, used as oracles for the analysis code."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import SpecError


class Family(str, Enum):
    WHITE_NOISE = "white"
    FGN = "fgn"
    CASCADE = "cascade"
    COUPLED = "coupled"


@dataclass(frozen=True)
class SurrogateSpec:
    """What to generate.

    ``hurst`` applies to fGn, ``weight`` and ``generations`` to binomial
    cascades (whose length is ``2**generations``). For ``COUPLED`` the
    ``base`` family produces two independent draws x, x' and the pair is
    ``(x, coupling * x + (1 - coupling) * x')``. ``shuffled`` randomizes which
    child of each cascade node receives the larger weight.
    """

    family: Family
    length: int = 1 << 14
    seed: int = 0
    hurst: float = 0.5
    weight: float = 0.75
    generations: int | None = None
    base: Family | None = None
    coupling: float = 0.0
    shuffled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.base is not None:
            object.__setattr__(self, "base", Family(self.base))
        fam = self.base if self.family is Family.COUPLED else self.family
        if self.family is Family.COUPLED:
            if fam is None or fam is Family.COUPLED:
                raise SpecError("coupled pair needs a non-coupled base family")
            if not 0.0 <= self.coupling <= 1.0:
                raise SpecError(f"coupling must lie in [0, 1], got {self.coupling}")
        if fam is Family.FGN and not 0.0 < self.hurst < 1.0:
            raise SpecError(f"Hurst exponent must lie in (0, 1), got {self.hurst}")
        if fam is Family.CASCADE:
            if not 0.5 < self.weight < 1.0:
                raise SpecError(f"cascade weight must lie in (0.5, 1), got {self.weight}")
            gens = self.generations
            if gens is None:
                gens = int(round(math.log2(self.length)))
                if self.length < 2 or 1 << gens != self.length:
                    raise SpecError(f"cascade length must be a power of two, got {self.length}")
                object.__setattr__(self, "generations", gens)
            elif gens < 1:
                raise SpecError("cascade needs at least one generation")
            object.__setattr__(self, "length", 1 << self.generations)
        elif self.length < 1:
            raise SpecError("length must be positive")


def fgn_autocovariance(hurst: float, lags) -> np.ndarray:
    """Exact autocovariance of unit-variance fractional Gaussian noise."""
    k = np.abs(np.asarray(lags, dtype=np.float64))
    h2 = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** h2 - 2.0 * k ** h2 + np.abs(k - 1) ** h2)


def fgn(length: int, hurst: float, rng: np.random.Generator) -> np.ndarray:
    """Fractional Gaussian noise by circulant embedding (Davies-Harte).

    The sample has exactly the fGn autocovariance with unit variance.
    """
    if length == 1:
        return rng.standard_normal(1)
    n = length
    row = fgn_autocovariance(hurst, np.arange(n + 1))
    circ = np.concatenate([row, row[-2:0:-1]])
    eig = np.fft.fft(circ).real
    if eig.min() < -1e-9 * eig.max():
        raise SpecError(f"circulant embedding not non-negative for H={hurst}, n={n}")
    eig = np.clip(eig, 0.0, None)
    size = circ.size
    z = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    w = np.fft.fft(np.sqrt(eig / size) * z)
    return w.real[:n].copy()


def binomial_cascade(generations: int, weight: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Binomial multiplicative measure on ``2**generations`` cells (total mass 1).

    With ``rng`` given, each node sends ``weight`` to a randomly chosen child;
    otherwise always to the left child.
    """
    x = np.ones(1)
    for _ in range(generations):
        if rng is None:
            left = np.full(x.size, weight)
        else:
            left = np.where(rng.random(x.size) < 0.5, weight, 1.0 - weight)
        x = np.column_stack([x * left, x * (1.0 - left)]).ravel()
    return x


def cascade_spectrum(weight: float):
    """Closed-form generalized Hurst exponent h(q) of the binomial cascade.

    h(q) = 1/q - log2(p^q + (1-p)^q) / q, with its continuous limit at q = 0.
    """
    if not 0.5 < weight < 1.0:
        raise SpecError(f"cascade weight must lie in (0.5, 1), got {weight}")
    p, r = weight, 1.0 - weight

    def h(q):
        q = np.asarray(q, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 1.0 / q - np.log2(p ** q + r ** q) / q
        limit = -(math.log2(p) + math.log2(r)) / 2.0
        out = np.where(q == 0, limit, val)
        return float(out) if out.ndim == 0 else out

    return h


def _single(family: Family, spec: SurrogateSpec, rng: np.random.Generator, shuffled: bool) -> np.ndarray:
    if family is Family.WHITE_NOISE:
        return rng.standard_normal(spec.length)
    if family is Family.FGN:
        return fgn(spec.length, spec.hurst, rng)
    if family is Family.CASCADE:
        return binomial_cascade(spec.generations, spec.weight, rng if shuffled else None)
    raise SpecError(f"unsupported family {family}")


def generate(spec: SurrogateSpec):
    """Draw the series described by ``spec``; a tuple ``(x, y)`` for coupled pairs.

    In a coupled cascade pair the shared draw x follows ``spec.shuffled``
    while the independent copy x' is always a shuffled cascade, so the two
    never coincide.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.family is not Family.COUPLED:
        return _single(spec.family, spec, rng, spec.shuffled)
    x = _single(spec.base, spec, rng, spec.shuffled)
    if spec.coupling == 1.0:
        return x, x.copy()
    other = _single(spec.base, spec, rng, True)
    return x, spec.coupling * x + (1.0 - spec.coupling) * other
