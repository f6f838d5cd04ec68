"""Pure power-law lattice laws P(X = a + nh) = C |n|^{-1-alpha}."""

import logging
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.special import zeta

from ..config import get_settings
from ..errors import ValidationFailure
from ..regvar import power_function
from .base import DistributionBuilder, LatticeDist

logger = logging.getLogger(__name__)


class PowerLawSpec(BaseModel):
    """Spec file block for a power-law law."""

    kind: Literal["power_law"] = "power_law"
    h: float = Field(1.0, gt=0.0)
    a: float = Field(0.0, ge=0.0)
    alpha: float = Field(gt=0.0, lt=2.0)
    C: float | None = Field(None, gt=0.0)
    rho: float = Field(0.0, ge=0.0)
    zero_mean: bool = False
    x_max: float = Field(gt=0.0)

    @model_validator(mode="after")
    def _check(self) -> "PowerLawSpec":
        if self.a >= self.h:
            raise ValueError("offset a must lie in [0, h)")
        if self.zero_mean and self.alpha <= 1.0:
            raise ValueError("zero_mean needs a finite mean (alpha > 1)")
        return self


def make_power_law(
    h: float,
    a: float,
    alpha: float,
    C: float | None,
    x_max: float,
    rho: float = 0.0,
    zero_mean: bool = False,
) -> LatticeDist:
    """
    Build P(X = a + nh) = C n^{-1-alpha} (n >= 1) with an optional left side rho C |n|^{-1-alpha}.

    Any mass deficit sits on the atom at a. With zero_mean the compensating
    mass C|1-rho|zeta(alpha) moves to the neighbouring point on the side
    opposite the drift. Tails beyond the window carry exact Hurwitz-zeta
    masses and a power tail model anchored at the window edge.
    """
    settings = get_settings()
    if not 0.0 < alpha < 2.0:
        raise ValidationFailure("alpha", "alpha must lie in (0, 2)")
    if zero_mean and alpha <= 1.0:
        raise ValidationFailure("zero_mean", "needs alpha > 1")
    n_max = int(math.floor((x_max - a) / h + 1e-9))
    if n_max < 2:
        raise ValidationFailure("x_max", "window must hold at least two positive points")

    sides = 1.0 + rho
    body = sides * float(zeta(1.0 + alpha, 1.0))
    drift = (1.0 - rho) * float(zeta(alpha, 1.0)) if zero_mean else 0.0
    if C is None:
        C = 1.0 / (body + abs(drift))
    compensation = C * abs(drift)
    atom = 1.0 - C * body - compensation
    if atom < -1e-12:
        raise ValidationFailure("C", f"C = {C} exceeds the normalisable maximum {1.0 / (body + abs(drift)):.6g}")
    atom = max(atom, 0.0)

    beyond = C * float(zeta(1.0 + alpha, n_max + 1.0))
    captured = 1.0 - beyond * sides
    if captured < settings.window_capture:
        needed = (C * sides / (alpha * (1.0 - settings.window_capture))) ** (1.0 / alpha)
        raise ValidationFailure(
            "x_max",
            f"window captures {captured:.6f} < {settings.window_capture}; "
            f"need x_max >= {a + h * math.ceil(needed):.6g}",
        )

    n = np.arange(1, n_max + 1, dtype=float)
    right = C * n ** (-1.0 - alpha)
    left_points = n_max if rho > 0.0 else (1 if zero_mean and drift > 0 else 0)
    i_min = -left_points
    masses = np.zeros(left_points + 1 + n_max)
    origin = left_points
    masses[origin + 1 :] = right
    if rho > 0.0:
        masses[:origin] = rho * right[:left_points][::-1]
    masses[origin] += atom
    if zero_mean:
        masses[origin - 1 if drift > 0 else origin + 1] += compensation

    tail_right = beyond
    tail_left = rho * beyond
    masses, tail_right, tail_left = DistributionBuilder.normalise(masses, tail_right, tail_left)

    x_edge = a + h * n_max
    ell = power_function(alpha, scale=1.0 / (tail_right * x_edge**alpha))
    dist = LatticeDist(
        h=h,
        a=a,
        i_min=i_min,
        masses=masses,
        right_tail=ell,
        tail_mass_right=tail_right,
        tail_mass_left=tail_left,
        left_tail_ratio=rho if rho > 0.0 else None,
        kind="power_law",
        tail_band=settings.tail_band,
        params={"alpha": alpha, "C": C, "rho": rho, "zero_mean": zero_mean, "x_max": x_max},
    )
    logger.debug("power law alpha=%g window=[%g, %g]", alpha, dist.x_min, dist.x_max)
    return dist


class PowerLawBuilder(DistributionBuilder):
    """Builder for power_law specs."""

    @property
    def kind(self) -> str:
        return "power_law"

    def build(self, spec: PowerLawSpec) -> LatticeDist:
        return make_power_law(
            h=spec.h,
            a=spec.a,
            alpha=spec.alpha,
            C=spec.C,
            x_max=spec.x_max,
            rho=spec.rho,
            zero_mean=spec.zero_mean,
        )
