"""Stable limit laws normalised by their Lévy tails, and the renewal limit constants."""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gamma
from scipy.stats import levy_stable

from .distributions.base import LatticeDist
from .errors import ValidationFailure
from .quadrature import integrate

logger = logging.getLogger(__name__)

_CLAMP_FLOOR = 1e-10
_INTERP_POINTS = 2049


def positivity(alpha: float, rho_tail: float) -> float:
    """
    varrho = P(zeta > 0) = 1/2 + arctan(c tan(pi alpha/2))/(pi alpha), c = (1-rho)/(1+rho).

    Valid for alpha in (0, 2) away from 1; at alpha = 1 only the symmetric
    case (c = 0) is defined.
    """
    if not 0.0 < alpha < 2.0:
        raise ValidationFailure("alpha", "alpha must lie in (0, 2)")
    if rho_tail < 0.0:
        raise ValidationFailure("rho_tail", "tail ratio must be nonnegative")
    c = (1.0 - rho_tail) / (1.0 + rho_tail)
    if alpha == 1.0:
        if c != 0.0:
            raise ValidationFailure("alpha", "alpha = 1 needs symmetric tails")
        return 0.5
    value = 0.5 + math.atan(c * math.tan(math.pi * alpha / 2.0)) / (math.pi * alpha)
    return min(1.0, max(0.0, value))


def ladder_srt_constant(alpha: float, varrho: float, h: float = 1.0) -> float:
    """h sin(pi alpha varrho)/pi."""
    product = alpha * varrho
    if not 0.0 < product <= 0.5 + 1e-12:
        raise ValidationFailure("alpha", f"alpha*varrho = {product:.6g} outside (0, 1/2]")
    if h <= 0.0:
        raise ValidationFailure("h", "span must be positive")
    return h * math.sin(math.pi * product) / math.pi


@dataclass(frozen=True)
class StableLimit:
    """
    The stable law zeta with Lévy tails x^{-alpha} on the right and rho x^{-alpha} on the left.

    In scipy's S1 parametrisation this is levy_stable(alpha, beta, scale=sigma)
    with beta = (1-rho)/(1+rho) and sigma^alpha = Gamma(1-alpha)(1+rho)cos(pi alpha/2)
    (alpha < 1; no centring).
    """

    alpha: float
    rho_tail: float
    _interp: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 2.0:
            raise ValidationFailure("alpha", "alpha must lie in (0, 2)")
        if self.rho_tail < 0.0:
            raise ValidationFailure("rho_tail", "tail ratio must be nonnegative")

    @property
    def c_skew(self) -> float:
        return (1.0 - self.rho_tail) / (1.0 + self.rho_tail)

    @property
    def varrho(self) -> float:
        return positivity(self.alpha, self.rho_tail)

    @property
    def beta(self) -> float:
        return self.c_skew

    @property
    def scale(self) -> float:
        self._require_density()
        sigma_alpha = gamma(1.0 - self.alpha) * (1.0 + self.rho_tail) * math.cos(math.pi * self.alpha / 2.0)
        return float(sigma_alpha ** (1.0 / self.alpha))

    def _require_density(self) -> None:
        if self.alpha >= 1.0:
            raise ValidationFailure("alpha", "densities are only available for alpha < 1")

    @property
    def frozen(self):
        self._require_density()
        return levy_stable(self.alpha, self.beta, loc=0.0, scale=self.scale)

    def density(self, x):
        """p(x), vectorised; roundoff below 1e-10 clamped to zero."""
        self._require_density()
        x = np.asarray(x, dtype=float)
        values = np.atleast_1d(self.frozen.pdf(x)).astype(float)
        values = np.where(values < _CLAMP_FLOOR, np.maximum(values, 0.0), values)
        values = np.where(np.isfinite(values), values, 0.0)
        return values.reshape(x.shape) if x.ndim else float(values[0])

    def survival(self, x):
        """P(zeta > x)."""
        self._require_density()
        return self.frozen.sf(x)

    def cf_density(self, x: float) -> float:
        """
        p(x) by direct inversion of the characteristic function,

            p(x) = (1/pi) int_0^inf exp(-A t^alpha) cos(B t^alpha - x t) dt,

        with A = sigma^alpha and B = A beta tan(pi alpha/2), split into a cosine-
        and a sine-weighted Fourier integral.
        """
        self._require_density()
        A = self.scale**self.alpha
        B = A * self.beta * math.tan(math.pi * self.alpha / 2.0)
        a = self.alpha

        def even(t: float) -> float:
            return math.exp(-A * t**a) * math.cos(B * t**a)

        def odd(t: float) -> float:
            return math.exp(-A * t**a) * math.sin(B * t**a)

        if x == 0.0:
            value = integrate(even, 0.0, math.inf, epsabs=1e-12)
        else:
            w = abs(x)
            sign = 1.0 if x > 0 else -1.0
            value = integrate(even, 0.0, math.inf, weight="cos", wvar=w) + sign * integrate(
                odd, 0.0, math.inf, weight="sin", wvar=w
            )
        return max(value / math.pi, 0.0)

    def interpolant(self, lo: float = -50.0, hi: float = 50.0):
        """
        A cubic spline of p on [lo, hi], filled once per range and shared across threads.

        Hot loops (lower bounds, remainders) evaluate this instead of the exact pdf.
        """
        key = (lo, hi)
        spline = self._interp.get(key)
        if spline is not None:
            return spline
        with self._lock:
            spline = self._interp.get(key)
            if spline is None:
                grid = np.linspace(lo, hi, _INTERP_POINTS)
                spline = CubicSpline(grid, self.density(grid))
                self._interp[key] = spline
        return spline

    def density_fast(self, x) -> np.ndarray:
        """p(x) from the cached spline inside [-50, 50] and the exact pdf outside."""
        x = np.asarray(x, dtype=float)
        inside = np.abs(x) <= 50.0
        out = np.empty(x.shape)
        out[inside] = np.maximum(self.interpolant()(x[inside]), 0.0)
        if np.any(~inside):
            out[~inside] = self.density(x[~inside])
        return out

    def srt_constant(self, h: float = 1.0) -> float:
        """alpha h int_0^inf x^{-alpha} p(x) dx, split at the density mode."""
        self._require_density()
        if h <= 0.0:
            raise ValidationFailure("h", "span must be positive")
        mode = self.mode()
        alpha = self.alpha

        def integrand(x: float) -> float:
            return x ** (-alpha) * float(self.density(x))

        eps = 1e-12
        cuts = sorted({eps, max(mode, 1e-6), max(1.0, 4.0 * mode)})
        # p is flat on [0, eps]
        total = float(self.density(0.0)) * eps ** (1.0 - alpha) / (1.0 - alpha)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            total += integrate(integrand, lo, hi, epsrel=1e-9)
        total += integrate(integrand, cuts[-1], math.inf, epsrel=1e-9)
        return alpha * h * total

    def mode(self) -> float:
        """Location of the largest density value on a coarse grid over [0, 20]."""
        grid = np.linspace(0.0, 20.0, 401)[1:]
        return float(grid[int(np.argmax(self.density(grid)))])

    def total_mass(self) -> float:
        """int p over the real line (a normalisation check)."""
        mode = self.mode()
        pieces = [(-math.inf, -1.0), (-1.0, 0.0), (0.0, max(mode, 1e-3)), (max(mode, 1e-3), math.inf)]
        return sum(integrate(lambda t: float(self.density(t)), lo, hi, epsrel=1e-9) for lo, hi in pieces)

    def tail_normalisation(self, x: float) -> float:
        """x^alpha P(zeta > x); tends to 1."""
        return float(x**self.alpha * self.survival(x))

    def describe(self) -> dict:
        info = {"alpha": self.alpha, "rho_tail": self.rho_tail, "c_skew": self.c_skew, "varrho": self.varrho}
        if self.alpha < 1.0:
            info["scale"] = self.scale
            info["beta"] = self.beta
        return info


def stable_limit(alpha: float, rho_tail: float = 0.0) -> StableLimit:
    return StableLimit(alpha=alpha, rho_tail=rho_tail)


def limit_for(dist: LatticeDist) -> StableLimit:
    """The stable limit of a law with a regularly varying right tail."""
    if dist.right_tail is None:
        raise ValidationFailure("right_tail", "law has no regularly varying tail")
    rho = dist.left_tail_ratio if dist.left_tail_ratio is not None else 0.0
    return StableLimit(alpha=dist.right_tail.alpha, rho_tail=rho)


def srt_constant(lim: StableLimit, h: float = 1.0) -> float:
    return lim.srt_constant(h)
