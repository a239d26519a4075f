"""Detrended (cross-)correlation analysis of high-frequency market quantities."""

from .fractal import AnalysisConfig, FluctuationSurface, mfcca, mfdfa
from .ingest import Kind, QuantitySeries, SessionCalendar, TickFormat, TickRecord, aggregate, parse_ticks
from .scaling import ScalingSpectrum, average_hurst, fit_exponents, join_series, mask_negative
from .seasonality import DailyPattern, daily_pattern, detrend_daily
from .surrogates import Family, SurrogateSpec, cascade_spectrum, generate

__version__ = "0.1.0"
