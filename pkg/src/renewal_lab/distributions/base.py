"""Lattice distributions and the abstract builder interface."""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np

from ..errors import OutOfSupport, ValidationFailure
from ..quadrature import integrate
from ..regvar import RegVarFn

# Slack that keeps lattice points computed in floating point on their own cell
_INDEX_SLACK = 1e-9
_POINT_CHUNK = 1 << 22
_MAX_SUMMED_POINTS = 1 << 26


@dataclass(frozen=True, eq=False)
class LatticeDist:
    """
    A probability law on the lattice a + hZ.

    Masses for indices i_min..i_max are stored explicitly. Beyond the window
    the law is carried by parametric tails anchored at the window edges:

        P(X > x_j)  = tail_mass_right * ell(x_{i_max}) / ell(x_j),      j >= i_max
        P(X <= x_j) = tail_mass_left * ell(|x_{i_min-1}|) / ell(|x_j|),  j <= i_min - 1
    """

    h: float
    a: float
    i_min: int
    masses: np.ndarray
    right_tail: RegVarFn | None = None
    tail_mass_right: float = 0.0
    tail_mass_left: float = 0.0
    left_tail_ratio: float | None = None
    kind: str = "explicit"
    tail_band: float = 0.05
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        masses = np.ascontiguousarray(self.masses, dtype=float)
        if masses.ndim != 1 or masses.size == 0:
            raise ValidationFailure("masses", "window must be a nonempty 1-d array")
        if np.any(masses < 0.0) or self.tail_mass_right < 0.0 or self.tail_mass_left < 0.0:
            raise ValidationFailure("masses", "masses must be nonnegative")
        if self.h <= 0.0:
            raise ValidationFailure("h", "span must be positive")
        if not 0.0 <= self.a < self.h:
            raise ValidationFailure("a", "offset must lie in [0, h)")
        if (self.tail_mass_right > 0.0 or self.tail_mass_left > 0.0) and self.right_tail is None:
            raise ValidationFailure("right_tail", "tail masses need a tail model")
        if self.tail_mass_right > 0.0 and self.position(self.i_min + masses.size - 1) <= 0.0:
            raise ValidationFailure("x_max", "right tail must be anchored at a positive point")
        if self.tail_mass_left > 0.0 and self.position(self.i_min - 1) >= 0.0:
            raise ValidationFailure("masses", "left tail must be anchored at a negative point")
        masses.setflags(write=False)
        object.__setattr__(self, "masses", masses)
        above = np.empty(masses.size + 1)
        above[:-1] = np.cumsum(masses[::-1])[::-1] + self.tail_mass_right
        above[-1] = self.tail_mass_right
        # above[k] = P(X > x_{i_min + k - 1})
        object.__setattr__(self, "_above", above)
        nonzero = np.flatnonzero(masses)
        first = int(nonzero[0]) + self.i_min if nonzero.size else self.i_min
        last = int(nonzero[-1]) + self.i_min if nonzero.size else self.i_min
        object.__setattr__(self, "_first_index", first)
        object.__setattr__(self, "_last_index", last)

    # ------------------------------------------------------------------
    # Geometry
    # ------------------------------------------------------------------

    @property
    def i_max(self) -> int:
        return self.i_min + self.masses.size - 1

    @property
    def x_min(self) -> float:
        return self.position(self.i_min)

    @property
    def x_max(self) -> float:
        return self.position(self.i_max)

    def position(self, j):
        return self.a + self.h * np.asarray(j, dtype=float) if np.ndim(j) else self.a + self.h * j

    def index_floor(self, x):
        """Largest j with x_j <= x."""
        value = np.floor((np.asarray(x, dtype=float) - self.a) / self.h + _INDEX_SLACK)
        return value.astype(np.int64) if value.ndim else int(value)

    @property
    def total_mass(self) -> float:
        return float(self._above[0] + self.tail_mass_left)

    @property
    def window_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def min_support_index(self) -> float:
        return -math.inf if self.tail_mass_left > 0.0 else self._first_index

    @property
    def max_support_index(self) -> float:
        return math.inf if self.tail_mass_right > 0.0 else self._last_index

    @property
    def can_decrease(self) -> bool:
        """Whether a step can lower the lattice index."""
        return self.min_support_index < 0

    @property
    def can_increase(self) -> bool:
        return self.max_support_index > 0

    @property
    def is_one_sided(self) -> bool:
        return not self.can_decrease

    # ------------------------------------------------------------------
    # Tail model
    # ------------------------------------------------------------------

    def _right_tail_survival(self, j: np.ndarray) -> np.ndarray:
        if self.tail_mass_right == 0.0:
            return np.zeros(j.shape)
        log_anchor = self.right_tail.log_value(self.x_max)
        return self.tail_mass_right * np.exp(log_anchor - self.right_tail.log_value(self.position(j)))

    def _left_tail_cdf(self, j: np.ndarray) -> np.ndarray:
        if self.tail_mass_left == 0.0:
            return np.zeros(j.shape)
        log_anchor = self.right_tail.log_value(-self.position(self.i_min - 1))
        return self.tail_mass_left * np.exp(log_anchor - self.right_tail.log_value(-self.position(j)))

    def survival_index(self, j):
        """P(X > x_j), vectorised over integer indices."""
        jj = np.atleast_1d(np.asarray(j, dtype=np.int64))
        out = np.empty(jj.shape)
        inside = (jj >= self.i_min - 1) & (jj <= self.i_max)
        out[inside] = self._above[jj[inside] - self.i_min + 1]
        right = jj > self.i_max
        if np.any(right):
            out[right] = self._right_tail_survival(jj[right])
        left = jj < self.i_min - 1
        if np.any(left):
            out[left] = 1.0 - self._left_tail_cdf(jj[left])
        return out if np.ndim(j) else float(out[0])

    def mass_index(self, j):
        """P(X = x_j), vectorised over integer indices."""
        jj = np.atleast_1d(np.asarray(j, dtype=np.int64))
        out = np.zeros(jj.shape)
        inside = (jj >= self.i_min) & (jj <= self.i_max)
        out[inside] = self.masses[jj[inside] - self.i_min]
        right = jj > self.i_max
        if np.any(right) and self.tail_mass_right > 0.0:
            jr = jj[right]
            ell = self.right_tail
            log_anchor = ell.log_value(self.x_max)
            log_prev = ell.log_value(self.position(jr - 1))
            log_here = ell.log_value(self.position(jr))
            out[right] = (
                self.tail_mass_right
                * np.exp(log_anchor - log_prev)
                * -np.expm1(log_prev - log_here)
            )
        left = jj < self.i_min
        if np.any(left) and self.tail_mass_left > 0.0:
            jl = jj[left]
            ell = self.right_tail
            log_anchor = ell.log_value(-self.position(self.i_min - 1))
            log_here = ell.log_value(-self.position(jl))
            log_next = ell.log_value(-self.position(jl - 1))
            out[left] = (
                self.tail_mass_left
                * np.exp(log_anchor - log_here)
                * -np.expm1(log_here - log_next)
            )
        return out if np.ndim(j) else float(out[0])

    def vector(self, lo: int, hi: int) -> np.ndarray:
        """Point masses for indices lo..hi inclusive."""
        if hi < lo:
            return np.zeros(0)
        return self.mass_index(np.arange(lo, hi + 1, dtype=np.int64))

    # ------------------------------------------------------------------
    # Functionals
    # ------------------------------------------------------------------

    def tail(self, x):
        """F̄(x) = P(X > x)."""
        return self.survival_index(self.index_floor(x))

    def cdf(self, x):
        """F(x) = P(X <= x)."""
        return 1.0 - self.tail(x)

    def cell_mass(self, x):
        """F(x + I] with I = (0, h]."""
        return self.mass_index(self.index_floor(x) + 1)

    def interval_mass(self, x: float, length: float) -> float:
        """P(x < X <= x + length)."""
        if length <= 0.0:
            return 0.0
        lo = self.index_floor(x) + 1
        hi = self.index_floor(x + length)
        if hi < lo:
            return 0.0
        if hi - lo < _POINT_CHUNK:
            return float(self.vector(lo, hi).sum())
        return float(self.survival_index(lo - 1) - self.survival_index(hi))

    @property
    def p_plus(self) -> float:
        """P(X > 0)."""
        return float(self.tail(0.0))

    def omega(self, x: float) -> float:
        """omega(x) = x F(x+I] / F̄(x)."""
        if x <= 0.0:
            raise ValidationFailure("x", "omega needs x > 0")
        survival = self.tail(x)
        if survival <= 0.0:
            raise OutOfSupport(f"F̄({x:g}) = 0")
        return x * self.cell_mass(x) / survival

    def iter_points(self, lo: float, hi: float) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """Yield (positions, masses) chunks for lattice points in (lo, hi]."""
        j_lo = self.index_floor(lo) + 1
        j_hi = self.index_floor(hi)
        if math.isfinite(self.max_support_index):
            j_hi = min(j_hi, int(self.max_support_index))
        if math.isfinite(self.min_support_index):
            j_lo = max(j_lo, int(self.min_support_index))
        start = j_lo
        while start <= j_hi:
            stop = min(j_hi, start + _POINT_CHUNK - 1)
            idx = np.arange(start, stop + 1, dtype=np.int64)
            yield self.position(idx), self.mass_index(idx)
            start = stop + 1

    def positive_power_sum(self, p: int, s: float) -> float:
        """sum over lattice points 0 < x <= s of x^p P(X = x)."""
        j_hi = self.index_floor(s)
        j_lo = self.index_floor(0.0) + 1
        if j_hi - j_lo > _MAX_SUMMED_POINTS and self.tail_mass_right > 0.0:
            # Abel summation with the continuous tail beyond the window
            inner = sum(
                float(np.dot(x**p, m)) for x, m in self.iter_points(0.0, self.x_max)
            )
            x_n = self.x_max
            outer = integrate(lambda t: p * t ** (p - 1) * self.tail(t), x_n, s)
            return inner + outer + x_n**p * self.tail(x_n) - s**p * self.tail(s)
        return sum(float(np.dot(x**p, m)) for x, m in self.iter_points(0.0, s))

    def tail_consistency(self) -> float:
        """max |F̄(x) ell(x) - 1| over the last decade of the window."""
        if self.right_tail is None or self.tail_mass_right == 0.0:
            return 0.0
        j_hi = self.i_max
        j_lo = max(self.index_floor(self.x_max / 10.0), self._first_index, 1)
        idx = np.arange(j_lo, j_hi + 1, dtype=np.int64)
        idx = idx[self.position(idx) > 0.0]
        product = self.survival_index(idx) * self.right_tail(self.position(idx))
        return float(np.max(np.abs(product - 1.0)))

    def measured_tail_ratio(self, x: float) -> float:
        """F(-x) / F̄(x)."""
        right = self.tail(x)
        left = 1.0 - self.tail(-x)
        return left / right if right > 0 else math.nan

    def describe(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "h": self.h,
            "a": self.a,
            "window": [self.x_min, self.x_max],
            "window_mass": self.window_mass,
            "tail_mass_right": self.tail_mass_right,
            "tail_mass_left": self.tail_mass_left,
            "left_tail_ratio": self.left_tail_ratio,
            "right_tail": None if self.right_tail is None else self.right_tail.model_dump(),
            "params": self.params,
        }


def unit_mass(h: float = 1.0, index: int = 0) -> LatticeDist:
    """The unit mass at h*index on hZ."""
    return LatticeDist(h=h, a=0.0, i_min=index, masses=np.ones(1), kind="explicit")


class DistributionBuilder(ABC):
    """Abstract base class for distribution builders."""

    @property
    @abstractmethod
    def kind(self) -> str:
        """Spec discriminator handled by this builder."""
        pass

    @abstractmethod
    def build(self, spec: Any) -> LatticeDist:
        """
        Build a lattice law from its validated spec.

        Args:
            spec: The pydantic spec model for this kind.

        Returns:
            A normalised LatticeDist.
        """
        pass

    @staticmethod
    def normalise(
        masses: np.ndarray, tail_right: float, tail_left: float
    ) -> tuple[np.ndarray, float, float]:
        total = float(masses.sum()) + tail_right + tail_left
        return masses / total, tail_right / total, tail_left / total
