"""Regularly varying functions: evaluation, inversion, norming sequences and Karamata integrals."""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq

from .errors import ValidationFailure
from .quadrature import integrate

if TYPE_CHECKING:
    from .distributions.base import LatticeDist

logger = logging.getLogger(__name__)

# log^{(j)} x > 0 requires x above the (j-1)-fold tower of e
_LOG_POSITIVE_FLOOR = {1: 1.0, 2: math.e, 3: math.e**math.e}
_MAX_LOG_ORDER = 3
_LOG_X_CEILING = 700.0
_SNAP_RTOL = 1e-12


class LogFactor(BaseModel):
    """One slowly varying factor (log^{(order)} x)^power."""

    model_config = ConfigDict(frozen=True)

    order: int = Field(ge=1, le=_MAX_LOG_ORDER)
    power: float


class RegVarFn(BaseModel):
    """
    A parametric regularly varying function

        f(x) = C * x'^alpha * prod_j (log^{(j)} x')^{e_j},   x' = max(x, floor).

    Instances are immutable and hashable so they can key caches.
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(ge=0.0, le=2.0)
    scale: float = Field(default=1.0, gt=0.0)
    log_factors: tuple[LogFactor, ...] = ()
    floor: float = Field(default=1.0, ge=1.0)

    @model_validator(mode="after")
    def _check_domain(self) -> "RegVarFn":
        if not math.isfinite(self.scale) or not math.isfinite(self.floor):
            raise ValueError("scale and floor must be finite")
        orders = [lf.order for lf in self.log_factors]
        if len(set(orders)) != len(orders):
            raise ValueError("log factor orders must be distinct")
        for lf in self.log_factors:
            if lf.power != 0.0 and self.floor <= _LOG_POSITIVE_FLOOR[lf.order]:
                raise ValueError(
                    f"floor {self.floor} leaves log^({lf.order}) x nonpositive; "
                    f"need floor > {_LOG_POSITIVE_FLOOR[lf.order]:.6g}"
                )
        if self.log_factors:
            grid = np.exp(np.linspace(math.log(self.floor), _LOG_X_CEILING, 512))
            slope = self.log_derivative(grid)
            if not (np.all(slope >= -1e-12) or np.all(slope <= 1e-12)):
                raise ValueError(
                    "function is not monotone on [floor, inf); raise the floor"
                )
        return self

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    def _iterated_logs(self, x: np.ndarray) -> list[np.ndarray]:
        logs = []
        current = np.log(x)
        depth = max((lf.order for lf in self.log_factors), default=0)
        for _ in range(depth):
            logs.append(current)
            with np.errstate(divide="ignore", invalid="ignore"):
                current = np.log(current)
        return logs

    def log_value(self, x):
        """ln f(x), vectorised."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValidationFailure("x", "non-finite argument")
        xc = np.maximum(x, self.floor)
        out = math.log(self.scale) + self.alpha * np.log(xc)
        if self.log_factors:
            logs = self._iterated_logs(xc)
            for lf in self.log_factors:
                if lf.power != 0.0:
                    out = out + lf.power * np.log(logs[lf.order - 1])
        return out if out.ndim else float(out)

    def __call__(self, x):
        value = np.exp(self.log_value(x))
        return value if np.ndim(value) else float(value)

    def log_derivative(self, x):
        """
        Closed-form x f'(x)/f(x).

        For x above the floor this is alpha + sum_j e_j / prod_{i<=j} log^{(i)} x;
        below the floor the clamped function is flat.
        """
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, self.alpha, dtype=float)
        if self.log_factors:
            xc = np.maximum(x, self.floor)
            logs = self._iterated_logs(xc)
            for lf in self.log_factors:
                denom = np.ones_like(xc)
                for i in range(lf.order):
                    denom = denom * logs[i]
                out = out + lf.power / denom
        out = np.where(x < self.floor, 0.0, out)
        return out if out.ndim else float(out)

    # ------------------------------------------------------------------
    # Inversion
    # ------------------------------------------------------------------

    def invert(self, y: float) -> float:
        """
        Generalised inverse inf{t >= 1: f(t) > y}.

        Returns 1 when y lies below f(1). Root-finding runs on the log scale
        inside a bracket that expands geometrically.
        """
        if self.alpha == 0.0:
            raise ValidationFailure("alpha", "slowly varying functions are not invertible")
        if not math.isfinite(y):
            raise ValidationFailure("y", "non-finite target")
        if y < self(1.0):
            return 1.0
        log_y = math.log(y)
        lo = math.log(self.floor)
        if self.log_value(self.floor) >= log_y:
            return self.floor

        def gap(v: float) -> float:
            return self.log_value(math.exp(v)) - log_y

        hi = max(lo + 1.0, 2.0 * log_y / self.alpha, math.log(2.0))
        while gap(hi) < 0.0:
            if hi >= _LOG_X_CEILING:
                raise ValidationFailure("y", f"target {y:.3e} beyond representable range")
            hi = min(2.0 * hi, _LOG_X_CEILING)
        v = brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        return math.exp(v)

    def invert_array(self, y) -> np.ndarray:
        """Vectorised inverse by bisection on the log scale (used by samplers)."""
        if self.alpha == 0.0:
            raise ValidationFailure("alpha", "slowly varying functions are not invertible")
        y = np.asarray(y, dtype=float)
        log_y = np.log(y)
        lo = np.full(y.shape, math.log(self.floor))
        hi = np.maximum(lo + 1.0, 2.0 * np.maximum(log_y, 1.0) / self.alpha)
        hi = np.minimum(hi, _LOG_X_CEILING)
        for _ in range(64):
            short = self.log_value(np.exp(hi)) < log_y
            if not np.any(short & (hi < _LOG_X_CEILING)):
                break
            hi = np.where(short, np.minimum(2.0 * hi, _LOG_X_CEILING), hi)
        for _ in range(90):
            mid = 0.5 * (lo + hi)
            below = self.log_value(np.exp(mid)) < log_y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        out = np.exp(hi)
        return np.where(log_y < self.log_value(1.0), 1.0, out)

    # ------------------------------------------------------------------
    # Algebra
    # ------------------------------------------------------------------

    def __mul__(self, other: "RegVarFn") -> "RegVarFn":
        powers: dict[int, float] = {}
        for lf in (*self.log_factors, *other.log_factors):
            powers[lf.order] = powers.get(lf.order, 0.0) + lf.power
        return _build(
            self.alpha + other.alpha,
            self.scale * other.scale,
            powers,
            max(self.floor, other.floor),
        )

    def __pow__(self, exponent: float) -> "RegVarFn":
        powers = {lf.order: lf.power * exponent for lf in self.log_factors}
        return _build(self.alpha * exponent, self.scale**exponent, powers, self.floor)

    def times_power(self, c: float, log_powers: dict[int, float] | None = None) -> "RegVarFn":
        """Multiply by x^c * prod (log^{(j)} x)^{p_j}."""
        powers = {lf.order: lf.power for lf in self.log_factors}
        for order, power in (log_powers or {}).items():
            powers[order] = powers.get(order, 0.0) + power
        floor = self.floor
        for order, power in powers.items():
            if power != 0.0:
                floor = max(floor, _LOG_POSITIVE_FLOOR[order] * 1.0001 + 1e-9)
        return _build(self.alpha + c, self.scale, powers, floor)

    def rescaled(self, factor: float) -> "RegVarFn":
        return self.model_copy(update={"scale": self.scale * factor})

    def log_power(self, order: int) -> float:
        for lf in self.log_factors:
            if lf.order == order:
                return lf.power
        return 0.0


def _build(alpha: float, scale: float, powers: dict[int, float], floor: float) -> RegVarFn:
    factors = tuple(
        LogFactor(order=order, power=power)
        for order, power in sorted(powers.items())
        if power != 0.0
    )
    try:
        return RegVarFn(alpha=alpha, scale=scale, log_factors=factors, floor=floor)
    except ValueError as exc:
        raise ValidationFailure("regvar", str(exc)) from exc


def power_function(alpha: float, scale: float = 1.0, floor: float = 1.0) -> RegVarFn:
    """C x^alpha."""
    return RegVarFn(alpha=alpha, scale=scale, floor=floor)


def snap_integers(values, rtol: float = _SNAP_RTOL):
    """
    Round values lying within rtol (relative) of a whole number onto it.

    Evaluation goes through exp(log f), so an integer-valued f comes back one
    ulp off; strict bounds such as n < L(x) and counts such as ceil(L(x)) - 1
    need the exact integer.
    """
    arr = np.asarray(values, dtype=float)
    nearest = np.round(arr)
    close = np.abs(arr - nearest) <= rtol * np.maximum(np.abs(nearest), 1.0)
    out = np.where(close, nearest, arr)
    return out if out.ndim else float(out)


class NormingSeq:
    """
    The norming sequence a_n = f^-(n) with a_0 = a_1 = 1.

    Values are memoised behind a lock so concurrent readers share one fill.
    """

    def __init__(self, source: RegVarFn):
        self.source = source
        self._memo: dict[int, float] = {0: 1.0, 1: 1.0}
        self._lock = threading.Lock()

    def __call__(self, n: int) -> float:
        if n < 0:
            raise ValidationFailure("n", "norming index must be nonnegative")
        cached = self._memo.get(n)
        if cached is not None:
            return cached
        with self._lock:
            cached = self._memo.get(n)
            if cached is None:
                cached = max(1.0, self.source.invert(float(n)))
                self._memo[n] = cached
        return cached

    def array(self, ns) -> np.ndarray:
        return np.array([self(int(n)) for n in ns], dtype=float)


def norming(seq: NormingSeq, n: int) -> float:
    """a_n from a norming sequence."""
    return seq(n)


# ----------------------------------------------------------------------
# Karamata integrals
# ----------------------------------------------------------------------


@lru_cache(maxsize=4096)
def karamata_u(ell: RegVarFn, x: float) -> float:
    """
    u(x) = int_1^x (ell(s)/s)^2 ds.

    Integrated in v = ln s, one decade at a time, so the quadrature sees an
    integrand of bounded dynamic range on every piece.
    """
    if x < 1.0:
        raise ValidationFailure("x", "u is defined for x >= 1")
    v_end = math.log(x)
    if v_end == 0.0:
        return 0.0

    def integrand(v: float) -> float:
        return math.exp(2.0 * ell.log_value(math.exp(v)) - v)

    cuts = {0.0, v_end}
    kink = math.log(ell.floor)
    if 0.0 < kink < v_end:
        cuts.add(kink)
    step = math.log(10.0)
    v = step
    while v < v_end:
        cuts.add(v)
        v += step
    edges = sorted(cuts)
    return sum(integrate(integrand, lo, hi) for lo, hi in zip(edges[:-1], edges[1:]))


def karamata_k(ell: RegVarFn, x: float) -> float:
    """k(x) = ell(x)^2 / u(x)."""
    u = karamata_u(ell, x)
    if u == 0.0:
        return math.inf
    return ell(x) ** 2 / u


# ----------------------------------------------------------------------
# Truncated moments
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class MomentValue:
    """mu_p(s) together with its ratio to the Karamata asymptotic (p > alpha only)."""

    value: float
    karamata_ratio: float | None


def truncated_moment(dist: LatticeDist, p: int, s: float) -> MomentValue:
    """mu_p(s) = E[X^p ; 0 < X <= s] as an exact lattice sum."""
    if p < 0:
        raise ValidationFailure("p", "moment order must be nonnegative")
    if s <= 0.0:
        raise ValidationFailure("s", "cut level must be positive")
    if p == 0:
        value = dist.tail(0.0) - dist.tail(s)
    else:
        value = dist.positive_power_sum(p, s)
    ratio = None
    ell = dist.right_tail
    if p >= 1 and ell is not None and p > ell.alpha:
        ratio = value * (p - ell.alpha) * ell(s) / (ell.alpha * s**p)
    return MomentValue(value=float(value), karamata_ratio=ratio)


# ----------------------------------------------------------------------
# Potter bounds
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class PotterBound:
    """Smallest scanned X with f(y)/f(x) inside the Potter sandwich for y >= x >= X."""

    eps: float
    threshold: float
    constant: float


def potter_scan(
    f: RegVarFn,
    eps: float,
    x_max: float = 1e6,
    points: int = 160,
    target: float = 2.0,
) -> PotterBound:
    """Scan a log grid for the Potter constant K(X) and pick the first X with K <= target."""
    if eps <= 0.0:
        raise ValidationFailure("eps", "Potter epsilon must be positive")
    grid = np.geomspace(max(1.0, f.floor), x_max, points)
    log_f = np.asarray(f.log_value(grid))
    log_x = np.log(grid)
    dlog_ratio = log_f[None, :] - log_f[:, None]
    dlog_x = log_x[None, :] - log_x[:, None]
    upper = dlog_ratio - (f.alpha + eps) * dlog_x
    lower = (f.alpha - eps) * dlog_x - dlog_ratio
    worst = np.maximum(upper, lower)
    worst = np.where(np.triu(np.ones_like(worst, dtype=bool)), worst, -np.inf)
    row_max = worst.max(axis=1)
    suffix = np.maximum.accumulate(row_max[::-1])[::-1]
    constants = np.exp(np.maximum(suffix, 0.0))
    hits = np.nonzero(constants <= target)[0]
    index = int(hits[0]) if hits.size else points - 1
    return PotterBound(eps=eps, threshold=float(grid[index]), constant=float(constants[index]))
