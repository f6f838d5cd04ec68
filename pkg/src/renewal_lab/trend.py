"""Finite-scan verdicts for o(1) and O(1) statements."""

import math
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from .config import Settings, get_settings

Verdict = Literal["satisfied-on-range", "violated", "inconclusive"]


@dataclass(frozen=True)
class TrendVerdict:
    """Outcome of a trend test, with the numbers it was decided on."""

    verdict: Verdict
    rule: str
    note: str
    x_range: tuple[float, float]
    first_decade_max: float = math.nan
    last_decade_max: float = math.nan
    slope: float = math.nan
    reference: float = math.nan

    def to_dict(self) -> dict:
        return asdict(self)


def _span(x: np.ndarray) -> float:
    return math.log10(x[-1] / x[0]) if x.size >= 2 and x[0] > 0 else 0.0


def _clean(x, values) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    values = np.asarray(values, dtype=float)
    order = np.argsort(x)
    x, values = x[order], values[order]
    keep = np.isfinite(values)
    return x[keep], values[keep]


def loglog_slope(x: np.ndarray, values: np.ndarray) -> float:
    """Least-squares slope of log(values) against log(x) over positive values."""
    positive = values > 0.0
    if np.count_nonzero(positive) < 3:
        return math.nan
    slope, _ = np.polyfit(np.log(x[positive]), np.log(values[positive]), 1)
    return float(slope)


def decay_verdict(x, values, settings: Settings | None = None) -> TrendVerdict:
    """
    o(1) on a finite scan: the last-decade max is below the first-decade max
    divided by decay_ratio and the log-log slope over the top two decades is
    at most decay_slope. Trajectories that vanish or stay below
    negligible_level over the last decade count as decaying.
    """
    settings = settings or get_settings()
    x, values = _clean(x, values)
    if x.size == 0:
        return TrendVerdict("inconclusive", "decay", "empty trajectory", (math.nan, math.nan))
    x_range = (float(x[0]), float(x[-1]))
    if _span(x) < settings.min_decades:
        return TrendVerdict(
            "inconclusive", "decay", f"grid spans fewer than {settings.min_decades} decades", x_range
        )
    first = float(values[x <= x[0] * 10.0].max())
    last = float(values[x >= x[-1] / 10.0].max())
    top = x >= x[-1] / 100.0
    slope = loglog_slope(x[top], values[top])
    common = dict(x_range=x_range, first_decade_max=first, last_decade_max=last, slope=slope)
    if not np.any(values > 0.0):
        return TrendVerdict("satisfied-on-range", "decay", "identically zero", **common)
    if last <= settings.negligible_level:
        return TrendVerdict("satisfied-on-range", "decay", "below negligibility floor", **common)
    falling = math.isnan(slope) or slope <= settings.decay_slope
    if last < first / settings.decay_ratio and falling:
        return TrendVerdict("satisfied-on-range", "decay", "decaying", **common)
    return TrendVerdict("violated", "decay", "no decay over the scanned range", **common)


def bounded_verdict(x, values, settings: Settings | None = None) -> TrendVerdict:
    """
    O(1) on a finite scan: the last-decade max stays within bounded_factor
    times the median of the trajectory's nonzero values.
    """
    settings = settings or get_settings()
    x, values = _clean(x, values)
    if x.size == 0:
        return TrendVerdict("inconclusive", "bounded", "empty trajectory", (math.nan, math.nan))
    x_range = (float(x[0]), float(x[-1]))
    if _span(x) < settings.min_decades:
        return TrendVerdict(
            "inconclusive", "bounded", f"grid spans fewer than {settings.min_decades} decades", x_range
        )
    last = float(values[x >= x[-1] / 10.0].max())
    first = float(values[x <= x[0] * 10.0].max())
    nonzero = values[values > 0.0]
    if nonzero.size == 0:
        return TrendVerdict(
            "satisfied-on-range", "bounded", "identically zero", x_range, first, last, math.nan, 0.0
        )
    reference = float(np.median(nonzero))
    verdict: Verdict = "satisfied-on-range" if last <= settings.bounded_factor * reference else "violated"
    note = "bounded" if verdict == "satisfied-on-range" else "last decade exceeds the median band"
    return TrendVerdict(verdict, "bounded", note, x_range, first, last, loglog_slope(x, values), reference)


def combine(verdicts: list[Verdict]) -> Verdict:
    """Overall verdict: satisfied only if every part is."""
    if any(v == "violated" for v in verdicts):
        return "violated"
    if all(v == "satisfied-on-range" for v in verdicts):
        return "satisfied-on-range"
    return "inconclusive"
