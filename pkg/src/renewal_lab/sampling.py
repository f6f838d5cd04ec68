"""Random steps from lattice laws by inverse CDF."""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .distributions.base import LatticeDist
from .errors import ValidationFailure

logger = logging.getLogger(__name__)

# Jumps are clipped here so that partial sums stay exact in int64
CLIP_INDEX = 2**48


@dataclass(frozen=True)
class TailCheck:
    """Empirical P(X > x) against the exact tail."""

    x: np.ndarray
    empirical: np.ndarray
    exact: np.ndarray
    sigma: np.ndarray

    @property
    def max_z(self) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.abs(self.empirical - self.exact) / np.where(self.sigma > 0, self.sigma, np.inf)
        return float(np.max(z)) if z.size else 0.0


class WalkSampler:
    """
    i.i.d. steps of a LatticeDist as lattice indices.

    Window points are drawn by binary search in the cumulative masses.
    Points in the parametric tails come from inverting the tail function.
    With side="nonpositive" the sampler draws from the law of X given X <= 0.
    """

    def __init__(self, base: LatticeDist, side: Literal["all", "nonpositive"] = "all"):
        self.base = base
        self.side = side
        masses = np.asarray(base.masses, dtype=float).copy()
        tail_right = base.tail_mass_right
        if side == "nonpositive":
            positions = base.position(np.arange(base.i_min, base.i_max + 1))
            masses[positions > 0.0] = 0.0
            tail_right = 0.0
        elif side != "all":
            raise ValidationFailure("side", f"unknown side {side!r}")
        total = float(masses.sum()) + tail_right + base.tail_mass_left
        if total <= 0.0:
            raise ValidationFailure("base", f"no mass on the {side} side")
        self.total = total
        self.tail_left = base.tail_mass_left / total
        self.tail_right = tail_right / total
        self.cumulative = np.cumsum(masses / total)
        self.window_total = float(self.cumulative[-1])
        last = np.flatnonzero(masses)
        self._last_slot = int(last[-1]) if last.size else 0
        self.clipped = 0
        self._lock = threading.Lock()

    @property
    def mass(self) -> float:
        """Probability of the sampled side under the base law."""
        return self.total / self.base.total_mass

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """size step indices j (the step sits at a + h j)."""
        base = self.base
        u = rng.random(size)
        out = np.empty(size, dtype=np.int64)
        left = u < self.tail_left
        right = u >= self.tail_left + self.window_total
        middle = ~(left | right)
        slots = np.searchsorted(self.cumulative, u[middle] - self.tail_left, side="right")
        out[middle] = base.i_min + np.minimum(slots, self._last_slot)
        clipped = 0
        if np.any(right):
            # P(X > x_j | right tail) = ell(x_N)/ell(x_j)
            w = 1.0 - (u[right] - self.tail_left - self.window_total) / self.tail_right
            w = np.clip(w, np.finfo(float).tiny, 1.0)
            ell = base.right_tail
            target = np.exp(ell.log_value(base.x_max) - np.log(w))
            t = ell.invert_array(target)
            j = np.ceil((t - base.a) / base.h)
            clipped += int(np.count_nonzero(j > CLIP_INDEX))
            out[right] = np.maximum(np.minimum(j, CLIP_INDEX), base.i_max + 1).astype(np.int64)
        if np.any(left):
            # P(X <= x_j | left tail) = ell(|x_{i_min-1}|)/ell(|x_j|)
            v = np.clip(u[left] / self.tail_left, np.finfo(float).tiny, 1.0)
            ell = base.right_tail
            anchor = -base.position(base.i_min - 1)
            target = np.exp(ell.log_value(anchor) - np.log(v))
            t = ell.invert_array(target)
            j = np.ceil((-t - base.a) / base.h)
            clipped += int(np.count_nonzero(j < -CLIP_INDEX))
            out[left] = np.minimum(np.maximum(j, -CLIP_INDEX), base.i_min - 1).astype(np.int64)
        if clipped:
            with self._lock:
                self.clipped += clipped
            logger.debug("%d tail draws clipped at 2^48 lattice units", clipped)
        return out

    def draw_positions(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.base.a + self.base.h * self.draw(rng, size).astype(float)

    def tail_check(self, indices: np.ndarray, x_points) -> TailCheck:
        """Compare the empirical tail of drawn indices with F̄ at x_points."""
        x = np.asarray(x_points, dtype=float)
        positions = self.base.a + self.base.h * indices.astype(float)
        count = max(indices.size, 1)
        empirical = np.array([np.count_nonzero(positions > xi) / count for xi in x])
        tail = np.asarray(self.base.tail(x), dtype=float)
        if self.side == "nonpositive":
            tail = np.where(x >= 0.0, 0.0, tail - self.base.tail(0.0))
        exact = tail / self.mass
        sigma = np.sqrt(np.maximum(exact * (1.0 - exact), 0.0) / count)
        return TailCheck(x=x, empirical=empirical, exact=exact, sigma=sigma)


def sum_groups(values: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Sums of consecutive groups of the given sizes (empty groups give 0)."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0:
        return np.zeros(0, dtype=values.dtype)
    ends = np.cumsum(counts)
    totals = np.concatenate([[0], np.cumsum(values)])
    return totals[ends] - totals[ends - counts]


def binomial_sigma(p: float, count: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / max(count, 1))
