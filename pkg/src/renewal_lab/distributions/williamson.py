"""Spiked laws: C |n|^{-3/2} g(|n|) with spikes C 2^{-k/2}/b_k at n = ±2^k."""

import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from ..config import get_settings
from ..errors import ValidationFailure
from ..quadrature import integrate
from ..regvar import LogFactor, RegVarFn
from .base import DistributionBuilder, LatticeDist

logger = logging.getLogger(__name__)

_MAX_SPIKE_LEVEL = 1000


class SequenceRule(BaseModel):
    """b_k = coef * k^exponent for k >= 1."""

    coef: float = Field(1.0, gt=0.0)
    exponent: float = Field(1.0, ge=0.0)

    def __call__(self, k):
        return self.coef * np.asarray(k, dtype=float) ** self.exponent


def default_log_g() -> RegVarFn:
    """g(x) = ln x, clamped below x = 2."""
    return RegVarFn(alpha=0.0, scale=1.0, log_factors=(LogFactor(order=1, power=1.0),), floor=2.0)


class WilliamsonSpec(BaseModel):
    """Spec file block for a spiked law."""

    kind: Literal["williamson"] = "williamson"
    h: float = Field(1.0, gt=0.0)
    b_plus: SequenceRule = SequenceRule()
    b_minus: SequenceRule | None = SequenceRule()
    g: RegVarFn | None = None
    left_scale: float = Field(1.0, ge=0.0)
    x_max: float = Field(gt=4.0)


def _regular_tail_sum(g: RegVarFn, start: float) -> float:
    """int_{start - 1/2}^inf t^{-3/2} g(t) dt, the midpoint-rule value of sum_{m >= start} m^{-3/2} g(m)."""
    v0 = math.log(start - 0.5)

    def integrand(v: float) -> float:
        if v > 700.0:
            return 0.0
        return math.exp(-0.5 * v + g.log_value(math.exp(v)))

    return integrate(integrand, v0, math.inf)


def _spike_levels(n_max: int) -> tuple[np.ndarray, np.ndarray]:
    levels = np.arange(1, int(math.log2(n_max)) + 1)
    return levels, 2**levels


def make_williamson(
    b_plus: SequenceRule,
    b_minus: SequenceRule | None,
    g: RegVarFn | None,
    x_max: float,
    h: float = 1.0,
    left_scale: float = 1.0,
) -> LatticeDist:
    """
    Build the spiked law on hZ.

    Regular points carry C|n|^{-3/2}g(|n|) (times left_scale for n < 0),
    points n = 2^k carry C 2^{-k/2}/b^+_k and n = -2^k carry C 2^{-k/2}/b^-_k.
    Without b_minus the negative side has no spikes.
    """
    settings = get_settings()
    g = g or default_log_g()
    if g.alpha != 0.0:
        raise ValidationFailure("g", "g must be slowly varying (alpha = 0)")
    n_max = int(math.floor(x_max / h + 1e-9))
    if n_max < 4:
        raise ValidationFailure("x_max", "window must reach at least 4h")

    n = np.arange(1, n_max + 1, dtype=float)
    regular = n**-1.5 * np.asarray(g(n))
    levels, spikes = _spike_levels(n_max)
    right = regular.copy()
    right[spikes - 1] = 2.0 ** (-levels / 2.0) / b_plus(levels)
    left = left_scale * regular
    if b_minus is not None:
        left[spikes - 1] = 2.0 ** (-levels / 2.0) / b_minus(levels)

    # Beyond the window: regular sum minus regular spike points plus spikes
    far_levels = np.arange(int(math.log2(n_max)) + 1, _MAX_SPIKE_LEVEL + 1)
    far_points = 2.0**far_levels
    far_regular = float(np.sum(far_points**-1.5 * np.asarray(g(far_points))))
    base_tail = _regular_tail_sum(g, n_max + 1.0)
    tail_right = base_tail - far_regular + float(np.sum(2.0 ** (-far_levels / 2.0) / b_plus(far_levels)))
    tail_left = left_scale * base_tail
    if b_minus is not None:
        tail_left += float(np.sum(2.0 ** (-far_levels / 2.0) / b_minus(far_levels))) - left_scale * far_regular

    masses = np.concatenate([left[::-1], [0.0], right])
    total = float(masses.sum()) + tail_right + tail_left
    C = 1.0 / total
    masses, tail_right, tail_left = DistributionBuilder.normalise(masses, tail_right, tail_left)
    captured = 1.0 - tail_right - tail_left
    if captured < settings.window_capture:
        raise ValidationFailure(
            "x_max", f"window captures {captured:.6f} < {settings.window_capture}; enlarge x_max"
        )

    x_edge = h * n_max
    ell = _anchored_ell(g, x_edge, tail_right)
    dist = LatticeDist(
        h=h,
        a=0.0,
        i_min=-n_max,
        masses=masses,
        right_tail=ell,
        tail_mass_right=tail_right,
        tail_mass_left=tail_left,
        left_tail_ratio=left_scale if left_scale > 0.0 else None,
        kind="williamson",
        tail_band=settings.tail_band,
        params={
            "b_plus": b_plus.model_dump(),
            "b_minus": None if b_minus is None else b_minus.model_dump(),
            "g": g.model_dump(),
            "left_scale": left_scale,
            "x_max": x_max,
            "C": C,
            "D": 2.0 * C * g.scale,
        },
    )
    logger.debug("spiked law C=%.6g window=[%g, %g]", C, dist.x_min, dist.x_max)
    return dist


def _anchored_ell(g: RegVarFn, x_edge: float, tail_right: float) -> RegVarFn:
    """ell proportional to sqrt(x)/g(x), scaled so that F̄ ell = 1 at the window edge."""
    factors = tuple(LogFactor(order=lf.order, power=-lf.power) for lf in g.log_factors)
    for floor in (g.floor, math.e**2, math.e**3, math.e**4, math.e**6, math.e**8):
        try:
            shape = RegVarFn(
                alpha=0.5, scale=1.0 / g.scale, log_factors=factors, floor=max(floor, g.floor)
            )
        except ValueError:
            continue
        return shape.rescaled(1.0 / (tail_right * shape(x_edge)))
    raise ValidationFailure("g", "could not find a floor making sqrt(x)/g(x) monotone")


class WilliamsonBuilder(DistributionBuilder):
    """Builder for williamson specs."""

    @property
    def kind(self) -> str:
        return "williamson"

    def build(self, spec: WilliamsonSpec) -> LatticeDist:
        return make_williamson(
            b_plus=spec.b_plus,
            b_minus=spec.b_minus,
            g=spec.g,
            x_max=spec.x_max,
            h=spec.h,
            left_scale=spec.left_scale,
        )
