"""Laws given by an explicit list of lattice masses."""

import math
from functools import reduce
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..config import get_settings
from ..errors import ValidationFailure
from ..regvar import RegVarFn
from .base import DistributionBuilder, LatticeDist


class ExplicitSpec(BaseModel):
    """Spec file block for an explicit mass list."""

    kind: Literal["explicit"] = "explicit"
    h: float = Field(1.0, gt=0.0)
    a: float = Field(0.0, ge=0.0)
    first_index: int = 0
    masses: list[float] = Field(min_length=1)
    right_tail: RegVarFn | None = None
    tail_mass_right: float = Field(0.0, ge=0.0)
    tail_mass_left: float = Field(0.0, ge=0.0)
    left_tail_ratio: float | None = Field(None, ge=0.0)

    @model_validator(mode="after")
    def _check(self) -> "ExplicitSpec":
        if self.a >= self.h:
            raise ValueError("offset a must lie in [0, h)")
        if any(m < 0.0 for m in self.masses):
            raise ValueError("masses must be nonnegative")
        return self


def lattice_span_factor(indices: np.ndarray, offset_zero: bool) -> int:
    """gcd of the support indices (a = 0) or of their differences (a != 0)."""
    if indices.size == 0:
        return 1
    values = indices if offset_zero else indices - indices[0]
    values = [abs(int(v)) for v in values if v != 0]
    if not values:
        return 1
    return reduce(math.gcd, values)


def make_explicit(
    masses,
    h: float = 1.0,
    a: float = 0.0,
    first_index: int = 0,
    right_tail: RegVarFn | None = None,
    tail_mass_right: float = 0.0,
    tail_mass_left: float = 0.0,
    left_tail_ratio: float | None = None,
) -> LatticeDist:
    """
    Build a law from point masses at a + h*(first_index + i).

    The declared span is checked against the support: a common factor d > 1
    of the support indices means the law lives on a + dhZ and is rejected.
    """
    settings = get_settings()
    masses = np.asarray(masses, dtype=float)
    total = float(masses.sum()) + tail_mass_right + tail_mass_left
    if abs(total - 1.0) > 1e-9:
        raise ValidationFailure("masses", f"total mass {total:.12g} differs from 1")
    support = np.flatnonzero(masses) + first_index
    has_tails = tail_mass_right > 0.0 or tail_mass_left > 0.0
    factor = lattice_span_factor(support, offset_zero=(a == 0.0))
    if factor > 1 and not has_tails:
        raise ValidationFailure("h", f"support lies on a sublattice with span {factor * h:g}")
    masses, tail_mass_right, tail_mass_left = DistributionBuilder.normalise(
        masses, tail_mass_right, tail_mass_left
    )
    return LatticeDist(
        h=h,
        a=a,
        i_min=first_index,
        masses=masses,
        right_tail=right_tail,
        tail_mass_right=tail_mass_right,
        tail_mass_left=tail_mass_left,
        left_tail_ratio=left_tail_ratio,
        kind="explicit",
        tail_band=settings.tail_band,
        params={"first_index": first_index},
    )


class ExplicitBuilder(DistributionBuilder):
    """Builder for explicit specs."""

    @property
    def kind(self) -> str:
        return "explicit"

    def build(self, spec: ExplicitSpec) -> LatticeDist:
        return make_explicit(
            spec.masses,
            h=spec.h,
            a=spec.a,
            first_index=spec.first_index,
            right_tail=spec.right_tail,
            tail_mass_right=spec.tail_mass_right,
            tail_mass_left=spec.tail_mass_left,
            left_tail_ratio=spec.left_tail_ratio,
        )
