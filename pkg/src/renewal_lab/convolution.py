"""Convolution powers of lattice laws on a finite window, with error ledgers."""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

from .config import Settings, get_settings
from .distributions.base import LatticeDist
from .errors import BudgetExceeded, ValidationFailure

logger = logging.getLogger(__name__)

# Working arrays per window point: the power, the accumulators and two spectra
_BYTES_PER_POINT = 8 * 12


@dataclass
class ClampLedger:
    """Running total of negative FFT artifacts that were clamped to zero."""

    threshold: float
    budget: float
    total: float = 0.0
    count: int = 0
    large: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def record(self, values: np.ndarray) -> np.ndarray:
        """Clamp negatives in place and book them; raises once the budget is gone."""
        negative = values < 0.0
        if not np.any(negative):
            return values
        clamped = float(-values[negative].sum())
        large = int(np.count_nonzero(values < -self.threshold))
        values[negative] = 0.0
        with self._lock:
            self.total += clamped
            self.count += int(np.count_nonzero(negative))
            self.large += large
            total = self.total
        if large:
            logger.warning("%d FFT entries below -%.1e clamped", large, self.threshold)
        if total > self.budget:
            raise BudgetExceeded("clamp", total, self.budget)
        return values

    def summary(self) -> dict:
        return {"total": self.total, "count": self.count, "large": self.large, "budget": self.budget}


@dataclass
class MassVector:
    """
    Masses of a measure on the window indices lo..lo+len-1.

    For the n-th power the mass at index k sits at n*a + k*h. `error` bounds
    the L1 distance between the stored values and the true law restricted to
    the window; `support` bounds the indices the true law can charge.
    """

    lo: int
    values: np.ndarray
    n: int = 1
    error: float = 0.0
    support: tuple[float, float] = (-math.inf, math.inf)
    flagged: bool = False
    mass: float = 1.0

    @property
    def hi(self) -> int:
        return self.lo + self.values.size - 1

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def lost_mass(self) -> float:
        """Mass outside the window: the total mass minus what the window holds."""
        return max(0.0, self.mass - self.total)

    def at(self, k) -> np.ndarray:
        """Masses at indices k (zero outside the window)."""
        k = np.asarray(k, dtype=np.int64)
        inside = (k >= self.lo) & (k <= self.hi)
        out = np.zeros(k.shape)
        out[inside] = self.values[k[inside] - self.lo]
        return out

    def copy(self) -> "MassVector":
        return MassVector(self.lo, self.values.copy(), self.n, self.error, self.support, self.flagged, self.mass)


class SpectralFactor:
    """A fixed window vector with its real FFT cached at the product length."""

    def __init__(self, values: np.ndarray, length: int):
        self.length = length
        self.spectrum = sp_fft.rfft(values, length)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.apply_spectrum(sp_fft.rfft(values, self.length))

    def apply_spectrum(self, spectrum: np.ndarray) -> np.ndarray:
        return sp_fft.irfft(spectrum * self.spectrum, self.length)


def fft_convolve(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Full linear convolution of two real vectors via a zero-padded real FFT."""
    size = x.size + y.size - 1
    length = sp_fft.next_fast_len(size, real=True)
    return sp_fft.irfft(sp_fft.rfft(x, length) * sp_fft.rfft(y, length), length)[:size]


def naive_power(masses: np.ndarray, n: int) -> np.ndarray:
    """Full (untruncated) n-th convolution power by repeated direct convolution."""
    out = np.ones(1)
    for _ in range(n):
        out = np.convolve(out, masses)
    return out


class ConvPowerSet:
    """
    The convolution powers of one law on the window [w_lo, w_hi].

    Every product is cropped back to the window. The truncation error of a
    product is bounded by the factors' errors plus the parts of their lost
    mass that could still step back into the window. A law that cannot move
    towards the window from where it lost mass (one-sided laws) has exact
    powers. A single instance is single-writer.
    """

    def __init__(
        self,
        base: LatticeDist,
        w_lo: int,
        w_hi: int,
        settings: Settings | None = None,
        ledger: ClampLedger | None = None,
    ):
        self.settings = settings or get_settings()
        if w_hi < w_lo:
            raise ValidationFailure("window", "empty window")
        if not w_lo <= 0 <= w_hi:
            raise ValidationFailure("window", "window must contain the origin")
        self.base = base
        self.w_lo = w_lo
        self.w_hi = w_hi
        self.size = w_hi - w_lo + 1
        needed_mb = self.size * _BYTES_PER_POINT / 2**20
        if needed_mb > self.settings.budget_mb:
            raise BudgetExceeded("memory", needed_mb, self.settings.budget_mb)
        self.length = sp_fft.next_fast_len(2 * self.size - 1, real=True)
        self.ledger = ledger or ClampLedger(self.settings.clamp_threshold, self.settings.clamp_budget)
        step_support = (base.min_support_index, base.max_support_index)
        self.step_support = step_support
        self.base_vector = MassVector(
            lo=w_lo,
            values=base.vector(w_lo, w_hi),
            n=1,
            error=0.0,
            support=step_support,
            mass=base.total_mass,
        )
        self._base_factor: SpectralFactor | None = None
        self._memo: dict[int, MassVector] = {0: self.unit(), 1: self.base_vector}

    # ------------------------------------------------------------------
    # Basic objects
    # ------------------------------------------------------------------

    def unit(self) -> MassVector:
        """F^{*0}: the unit mass at the origin."""
        values = np.zeros(self.size)
        values[-self.w_lo] = 1.0
        return MassVector(lo=self.w_lo, values=values, n=0, error=0.0, support=(0.0, 0.0))

    def zeros(self, n: int = 0) -> MassVector:
        return MassVector(lo=self.w_lo, values=np.zeros(self.size), n=n, mass=self.base.total_mass**n)

    @property
    def base_factor(self) -> SpectralFactor:
        if self._base_factor is None:
            self._base_factor = SpectralFactor(self.base_vector.values, self.length)
        return self._base_factor

    def factor(self, vec: MassVector) -> SpectralFactor:
        return SpectralFactor(vec.values, self.length)

    def support_of(self, n: int) -> tuple[float, float]:
        lo, hi = self.step_support
        return (n * lo if n else 0.0, n * hi if n else 0.0)

    def returnable(self, vec: MassVector) -> float:
        """Part of vec's lost mass that a further step could carry back into the window."""
        if vec.n == 0:
            return 0.0
        outside = min(vec.mass, vec.lost_mass + vec.error)
        lost_right = vec.support[1] > self.w_hi
        lost_left = vec.support[0] < self.w_lo
        if (lost_right and self.base.can_decrease) or (lost_left and self.base.can_increase):
            return outside
        return 0.0

    # ------------------------------------------------------------------
    # Products
    # ------------------------------------------------------------------

    def crop(self, full: np.ndarray) -> np.ndarray:
        """Window part of a full product of two window vectors."""
        start = -self.w_lo
        return full[start : start + self.size].copy()

    def finish(self, values: np.ndarray, n: int, error: float) -> MassVector:
        """Zero structural zeros, clamp FFT artifacts and flag the window."""
        support = self.support_of(n)
        if math.isfinite(support[0]) and support[0] > self.w_lo:
            values[: int(min(support[0], self.w_hi + 1)) - self.w_lo] = 0.0
        if math.isfinite(support[1]) and support[1] < self.w_hi:
            values[max(int(support[1]), self.w_lo - 1) - self.w_lo + 1 :] = 0.0
        self.ledger.record(values)
        flagged = error > self.settings.window_budget
        return MassVector(
            lo=self.w_lo,
            values=values,
            n=n,
            error=error,
            support=support,
            flagged=flagged,
            mass=self.base.total_mass**n,
        )

    def product_error(self, a: MassVector, b: MassVector) -> float:
        return a.error + b.error + self.returnable(a) + self.returnable(b)

    def multiply(self, a: MassVector, b: MassVector) -> MassVector:
        """Window-cropped a * b."""
        full = fft_convolve(a.values, b.values)
        return self.finish(self.crop(full), a.n + b.n, self.product_error(a, b))

    def step(self, vec: MassVector, spectrum: np.ndarray | None = None) -> MassVector:
        """vec * F using the cached base spectrum."""
        if spectrum is None:
            spectrum = sp_fft.rfft(vec.values, self.length)
        full = self.base_factor.apply_spectrum(spectrum)
        return self.finish(self.crop(full), vec.n + 1, self.product_error(vec, self.base_vector))

    def conv_power(self, n: int) -> MassVector:
        """F^{*n} by binary doubling; results are memoised."""
        if n < 0:
            raise ValidationFailure("n", "power must be nonnegative")
        cached = self._memo.get(n)
        if cached is not None:
            return cached
        result = self._memo[0]
        square = self._memo[1]
        k, bit = n, 1
        while k:
            if k & 1:
                result = self.multiply(result, square) if result.n else square
            k >>= 1
            if k:
                bit <<= 1
                square = self._memo.get(bit) or self.multiply(square, square)
                self._memo[bit] = square
        self._memo[n] = result
        if result.flagged:
            logger.warning("power %d: window error bound %.3e above budget", n, result.error)
        return result

    def lost_mass(self, n: int) -> float:
        return self.conv_power(n).lost_mass


def window_bounds(base: LatticeDist, right: int, settings: Settings | None = None, log2: int | None = None) -> tuple[int, int]:
    """
    Window [w_lo, w_hi] reaching index `right`.

    The right edge is at least 2^log2 (default from settings). Laws that can
    step left get a symmetric window; others start at their lowest support point.
    """
    settings = settings or get_settings()
    log2 = settings.default_window_log2 if log2 is None else log2
    w_hi = max(int(right), 2**log2)
    if base.can_decrease:
        return -w_hi, w_hi
    return min(0, int(base.min_support_index)), w_hi
