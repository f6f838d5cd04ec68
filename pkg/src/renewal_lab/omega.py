"""The probability ratio omega, its exceedance sets and the overflow integrals."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .artifacts import write_table
from .config import Settings, get_settings
from .distributions.base import LatticeDist
from .errors import ValidationFailure
from .regvar import NormingSeq
from .trend import TrendVerdict, bounded_verdict

logger = logging.getLogger(__name__)

_CELL_CHUNK = 1 << 20
_MAX_SCAN_CELLS = 1 << 24
# e^{-60} is below double precision relative to any cell near x
_EXP_CUTOFF = 60.0


def _phi1(z: np.ndarray) -> np.ndarray:
    """expm1(z)/z."""
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 + z / 2.0 + z * z / 6.0, np.expm1(safe) / safe)


def _phi2(z: np.ndarray) -> np.ndarray:
    """(expm1(z) - z)/z^2."""
    small = np.abs(z) < 1e-3
    safe = np.where(small, 1.0, z)
    return np.where(
        small,
        0.5 + z / 6.0 + z * z / 24.0 + z**3 / 120.0,
        (np.expm1(safe) - safe) / (safe * safe),
    )


def cell_coefficients(dist: LatticeDist, j: np.ndarray) -> np.ndarray:
    """c_j with omega(y) = c_j y on [x_j, x_{j+1}); zero where F(y+I] = 0."""
    mass = dist.mass_index(j + 1)
    survival = dist.survival_index(j)
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where((mass > 0.0) & (survival > 0.0), mass / survival, 0.0)
    return coef


def omega_array(dist: LatticeDist, y) -> np.ndarray:
    """omega at many points; 0 wherever the cell mass vanishes."""
    y = np.asarray(y, dtype=float)
    return y * cell_coefficients(dist, np.asarray(dist.index_floor(y)))


def excess_segments(
    u: np.ndarray,
    v: np.ndarray,
    coef: np.ndarray,
    T: float,
    x: float,
    lam: float,
) -> np.ndarray:
    """
    int_u^v e^{-(x-y)/lam} [coef*y - T]^+ dy for each segment, lam = inf allowed.

    On a segment the excess is linear and positive above y = T/coef, so the
    integral has the closed form e^{w}[d phi1(z) g(v) - coef d^2 phi2(z)]
    with d the positive part's length, z = d/lam and w = (u' - x)/lam.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        threshold = np.where(coef > 0.0, T / coef, np.inf)
    start = np.maximum(u, threshold)
    d = np.maximum(v - start, 0.0)
    gv = coef * v - T
    if math.isinf(lam):
        values = d * gv - coef * d * d * 0.5
    else:
        z = d / lam
        weight = np.exp(np.minimum((start - x) / lam, 0.0))
        values = weight * (d * _phi1(z) * gv - coef * d * d * _phi2(z))
    return np.where(d > 0.0, np.maximum(values, 0.0), 0.0)


def _window_integral(dist: LatticeDist, lo: float, hi: float, T: float, x: float, lam: float) -> float:
    if hi <= lo:
        return 0.0
    j_lo = dist.index_floor(lo)
    j_hi = dist.index_floor(hi)
    total = 0.0
    start = j_lo
    while start <= j_hi:
        stop = min(j_hi, start + _CELL_CHUNK - 1)
        j = np.arange(start, stop + 1, dtype=np.int64)
        left = dist.position(j)
        u = np.maximum(left, lo)
        v = np.minimum(left + dist.h, hi)
        coef = cell_coefficients(dist, j)
        total += float(excess_segments(u, v, coef, T, x, lam).sum())
        start = stop + 1
    return total


def overflow_integral(dist: LatticeDist, x: float, T: float, eta: float) -> float:
    """I_eta(x, T) = int_{(1-eta)x}^x [omega(y) - T]^+ dy, exact over lattice cells."""
    _check_eta(eta)
    if T < 0.0:
        raise ValidationFailure("T", "threshold must be nonnegative")
    if x <= 0.0:
        return 0.0
    return _window_integral(dist, (1.0 - eta) * x, x, T, x, math.inf)


def exp_window_integral(
    dist: LatticeDist,
    x: float,
    T: float,
    eta: float,
    r: float,
    n: int,
    norming: NormingSeq | None = None,
) -> float:
    """
    Î_{eta,n,r}(x, T) = int_{(1-eta)x}^x e^{-(x-y)/(r a_n)} [omega(y) - T]^+ dy.

    Cells further than 60 r a_n below x are skipped; their weight is below e^{-60}.
    """
    _check_eta(eta)
    if not 0.0 < r <= 1.0:
        raise ValidationFailure("r", "r must lie in (0, 1]")
    if n < 1:
        raise ValidationFailure("n", "n must be at least 1")
    if x <= 0.0:
        return 0.0
    seq = norming or NormingSeq(dist.right_tail)
    lam = r * seq(n)
    lo = max((1.0 - eta) * x, x - _EXP_CUTOFF * lam)
    return _window_integral(dist, lo, x, T, x, lam)


def _check_eta(eta: float) -> None:
    if not 0.0 < eta <= 1.0:
        raise ValidationFailure("eta", "eta must lie in (0, 1]")


class OverflowProfile:
    """
    Prefix integrals of [omega - T]^+ over a range of cells.

    Answers I_eta(x, T) for many x with two lookups each.
    """

    def __init__(self, dist: LatticeDist, T: float, x_lo: float, x_hi: float):
        if T < 0.0:
            raise ValidationFailure("T", "threshold must be nonnegative")
        self.dist = dist
        self.T = T
        self.j_lo = dist.index_floor(max(x_lo, 0.0))
        self.j_hi = dist.index_floor(x_hi) + 1
        count = self.j_hi - self.j_lo + 1
        if count > _MAX_SCAN_CELLS:
            raise ValidationFailure("x_grid", f"profile spans {count} cells (max {_MAX_SCAN_CELLS})")
        j = np.arange(self.j_lo, self.j_hi + 1, dtype=np.int64)
        self.left = dist.position(j)
        self.coef = cell_coefficients(dist, j)
        full = excess_segments(self.left, self.left + dist.h, self.coef, T, 0.0, math.inf)
        self.prefix = np.concatenate([[0.0], np.cumsum(full)])

    def _cumulative(self, y: np.ndarray) -> np.ndarray:
        k = np.clip(self.dist.index_floor(y) - self.j_lo, 0, self.left.size - 1)
        partial = excess_segments(self.left[k], np.maximum(y, self.left[k]), self.coef[k], self.T, 0.0, math.inf)
        return self.prefix[k] + partial

    def integral(self, lo, hi) -> np.ndarray:
        """int_lo^hi [omega - T]^+ dy, vectorised."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        return np.maximum(self._cumulative(hi) - self._cumulative(lo), 0.0)

    def overflow(self, x, eta: float) -> np.ndarray:
        _check_eta(eta)
        x = np.asarray(x, dtype=float)
        return self.integral((1.0 - eta) * x, x)


class ExcessCells:
    """
    The cells of [lo, hi] on which omega exceeds T somewhere.

    Built once, it answers many exponentially weighted window integrals
    without revisiting the cells where [omega - T]^+ vanishes.
    """

    def __init__(self, dist: LatticeDist, T: float, lo: float, hi: float):
        if T < 0.0:
            raise ValidationFailure("T", "threshold must be nonnegative")
        if hi <= lo:
            raise ValidationFailure("x_grid", "cell range is empty")
        self.dist = dist
        self.T = T
        self.lo = max(lo, 0.0)
        self.hi = hi
        j_lo = dist.index_floor(self.lo)
        j_hi = dist.index_floor(hi)
        if j_hi - j_lo + 1 > 4 * _MAX_SCAN_CELLS:
            raise ValidationFailure("x_grid", f"range spans {j_hi - j_lo + 1} cells")
        lefts, coefs = [], []
        start = j_lo
        while start <= j_hi:
            stop = min(j_hi, start + _CELL_CHUNK - 1)
            j = np.arange(start, stop + 1, dtype=np.int64)
            left = dist.position(j)
            coef = cell_coefficients(dist, j)
            keep = coef * (left + dist.h) > T
            lefts.append(left[keep])
            coefs.append(coef[keep])
            start = stop + 1
        self.left = np.concatenate(lefts) if lefts else np.zeros(0)
        self.coef = np.concatenate(coefs) if coefs else np.zeros(0)
        logger.debug("%d of %d cells exceed T=%g", self.left.size, j_hi - j_lo + 1, T)

    def window(self, t: float, eta: float, lam: float = math.inf) -> float:
        """int over [(1-eta)t, t] of e^{-(t-y)/lam} [omega(y) - T]^+ dy."""
        _check_eta(eta)
        if t <= 0.0:
            return 0.0
        lo = (1.0 - eta) * t
        if math.isfinite(lam):
            lo = max(lo, t - _EXP_CUTOFF * lam)
        if lo < self.lo - 1e-9 * max(1.0, abs(self.lo)) or t > self.hi + 1e-9 * self.hi:
            raise ValidationFailure("t", f"window [{lo:g}, {t:g}] leaves the indexed range")
        h = self.dist.h
        i0 = int(np.searchsorted(self.left, lo - h, side="right"))
        i1 = int(np.searchsorted(self.left, t, side="left"))
        if i1 <= i0:
            return 0.0
        left = self.left[i0:i1]
        u = np.maximum(left, lo)
        v = np.minimum(left + h, t)
        return float(excess_segments(u, v, self.coef[i0:i1], self.T, t, lam).sum())

    def windows(self, ts, eta: float, lam: float = math.inf) -> np.ndarray:
        return np.array([self.window(float(t), eta, lam) for t in np.asarray(ts, dtype=float)])


@dataclass(frozen=True)
class IntervalSet:
    """A finite union of disjoint open intervals, sorted."""

    starts: np.ndarray
    ends: np.ndarray
    _cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        lengths = np.maximum(self.ends - self.starts, 0.0)
        object.__setattr__(self, "_cumulative", np.concatenate([[0.0], np.cumsum(lengths)]))

    @classmethod
    def from_segments(cls, starts, ends) -> "IntervalSet":
        starts = np.asarray(starts, dtype=float)
        ends = np.asarray(ends, dtype=float)
        keep = ends > starts
        starts, ends = starts[keep], ends[keep]
        if starts.size == 0:
            return cls(np.zeros(0), np.zeros(0))
        order = np.argsort(starts)
        starts, ends = starts[order], ends[order]
        # merge touching neighbours
        running_end = np.maximum.accumulate(ends)
        breaks = np.concatenate([[True], starts[1:] > running_end[:-1]])
        group = np.cumsum(breaks) - 1
        merged_starts = starts[breaks]
        merged_ends = np.zeros(merged_starts.size)
        np.maximum.at(merged_ends, group, ends)
        return cls(merged_starts, merged_ends)

    @property
    def is_empty(self) -> bool:
        return self.starts.size == 0

    def measure_below(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.starts, t, side="right") - 1
        kc = np.clip(k, 0, max(self.starts.size - 1, 0))
        if self.starts.size == 0:
            return np.zeros(t.shape)
        inside = np.clip(t - self.starts[kc], 0.0, self.ends[kc] - self.starts[kc])
        return np.where(k >= 0, self._cumulative[kc] + inside, 0.0)

    def measure(self, lo, hi) -> np.ndarray:
        """|E ∩ (lo, hi)|."""
        return self.measure_below(hi) - self.measure_below(lo)


@dataclass(frozen=True)
class OmegaScan:
    """omega on every lattice cell of [x_lo, x_hi]."""

    dist: LatticeDist
    cell_left: np.ndarray
    coef: np.ndarray
    truncated: bool

    @property
    def x_lo(self) -> float:
        return float(self.cell_left[0])

    @property
    def x_hi(self) -> float:
        return float(self.cell_left[-1] + self.dist.h)

    @property
    def midpoints(self) -> np.ndarray:
        return self.cell_left + 0.5 * self.dist.h

    @property
    def omega(self) -> np.ndarray:
        """omega at cell midpoints."""
        return self.coef * self.midpoints

    @property
    def cell_sup(self) -> np.ndarray:
        """sup of omega over each cell (approached at the right end)."""
        return self.coef * (self.cell_left + self.dist.h)

    @property
    def running_sup(self) -> np.ndarray:
        return np.maximum.accumulate(self.cell_sup)

    def exceedance(self, T: float) -> IntervalSet:
        """E_T = {y in the scan: omega(y) > T}."""
        with np.errstate(divide="ignore"):
            threshold = np.where(self.coef > 0.0, T / self.coef, np.inf)
        starts = np.maximum(self.cell_left, threshold)
        ends = self.cell_left + self.dist.h
        return IntervalSet.from_segments(starts, ends)

    def write_csv(self, path: Path, T: float) -> None:
        omega = self.omega
        write_table(path, ["x", "omega", "in_E_T"], [self.midpoints, omega, (omega > T).astype(int)])


def omega_scan(dist: LatticeDist, x_lo: float, x_hi: float) -> OmegaScan:
    """Scan omega over every cell meeting [x_lo, x_hi]; stops early where F̄ vanishes."""
    if x_hi <= x_lo:
        raise ValidationFailure("x_hi", "scan range is empty")
    j_lo = dist.index_floor(x_lo)
    j_hi = dist.index_floor(x_hi)
    if j_hi - j_lo + 1 > _MAX_SCAN_CELLS:
        raise ValidationFailure("x_hi", f"scan spans more than {_MAX_SCAN_CELLS} cells")
    j = np.arange(j_lo, j_hi + 1, dtype=np.int64)
    survival = dist.survival_index(j)
    truncated = False
    dead = np.flatnonzero(survival <= 0.0)
    if dead.size:
        truncated = True
        j = j[: max(int(dead[0]), 1)]
        logger.warning("omega scan truncated at x=%g where F̄ vanishes", dist.position(j[-1]))
    return OmegaScan(dist=dist, cell_left=dist.position(j), coef=cell_coefficients(dist, j), truncated=truncated)


@dataclass(frozen=True)
class DensityReport:
    """Result of the density-at-scale sweep."""

    holds: bool
    constant: float
    worst_x: float
    worst_y: float
    worst_measure: float
    trend: TrendVerdict
    x: np.ndarray
    per_x_sup: np.ndarray


def set_density_at_scale(
    E: IntervalSet,
    c: float,
    s: float,
    x_lo: float,
    x_hi: float,
    points: int = 200,
    settings: Settings | None = None,
) -> DensityReport:
    """sup over x and y = x^s 2^j of |E ∩ (x, x+y)| / (x^{-c} y)."""
    if not 0.0 < c <= s:
        raise ValidationFailure("c", "need 0 < c <= s")
    x_lo = max(x_lo, 1.0)
    xs = np.geomspace(x_lo, x_hi / 2.0, points)
    per_x = np.zeros(xs.size)
    worst = (0.0, xs[0], xs[0] ** s, 0.0)
    for i, x in enumerate(xs):
        y0 = x**s
        count = int(math.floor(math.log2(max((x_hi - x) / y0, 1.0)))) + 1
        ys = y0 * 2.0 ** np.arange(count)
        ys = ys[x + ys <= x_hi]
        if ys.size == 0:
            continue
        measures = E.measure(np.full(ys.size, x), x + ys)
        ratios = measures / (x ** (-c) * ys)
        k = int(np.argmax(ratios))
        per_x[i] = ratios[k]
        if ratios[k] > worst[0]:
            worst = (float(ratios[k]), float(x), float(ys[k]), float(measures[k]))
    trend = bounded_verdict(xs, per_x, settings)
    return DensityReport(
        holds=trend.verdict == "satisfied-on-range",
        constant=worst[0],
        worst_x=worst[1],
        worst_y=worst[2],
        worst_measure=worst[3],
        trend=trend,
        x=xs,
        per_x_sup=per_x,
    )


def density_at_scale(scan: OmegaScan, T: float, c: float, s: float) -> DensityReport:
    """Density of E_T at scale x^s, measured against x^{-c}."""
    settings = get_settings()
    return set_density_at_scale(scan.exceedance(T), c, s, scan.x_lo, scan.x_hi, settings=settings)
