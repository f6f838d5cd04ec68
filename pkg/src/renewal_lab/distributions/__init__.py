"""Lattice distribution builders."""

from typing import Annotated, Union

from pydantic import Field

from .base import DistributionBuilder, LatticeDist, unit_mass
from .explicit import ExplicitBuilder, ExplicitSpec, make_explicit
from .power_law import PowerLawBuilder, PowerLawSpec, make_power_law
from .williamson import SequenceRule, WilliamsonBuilder, WilliamsonSpec, make_williamson

DistributionSpec = Annotated[
    Union[PowerLawSpec, WilliamsonSpec, ExplicitSpec],
    Field(discriminator="kind"),
]

# Map spec kinds to builders
BUILDERS: dict[str, type[DistributionBuilder]] = {
    "power_law": PowerLawBuilder,
    "williamson": WilliamsonBuilder,
    "explicit": ExplicitBuilder,
}


def build_distribution(spec: PowerLawSpec | WilliamsonSpec | ExplicitSpec) -> LatticeDist:
    """Dispatch a validated spec to its builder."""
    return BUILDERS[spec.kind]().build(spec)


__all__ = [
    "BUILDERS",
    "DistributionBuilder",
    "DistributionSpec",
    "ExplicitSpec",
    "LatticeDist",
    "PowerLawSpec",
    "SequenceRule",
    "WilliamsonSpec",
    "build_distribution",
    "make_explicit",
    "make_power_law",
    "make_williamson",
    "unit_mass",
]
