"""Job specification files."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .config import Settings, get_settings
from .distributions import DistributionSpec, ExplicitSpec
from .errors import ValidationFailure
from .regvar import RegVarFn

Task = Literal["renewal-scan", "small-n-table", "criteria", "lld-check", "ladder", "infdiv", "probe"]

STOCHASTIC_TASKS = {"ladder", "infdiv", "probe"}


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridSpec(_Block):
    """Either explicit values or `points` geometric (or linear) points on [lo, hi]."""

    values: list[float] | None = None
    lo: float | None = Field(None, gt=0.0)
    hi: float | None = Field(None, gt=0.0)
    points: int = Field(41, ge=1)
    geometric: bool = True

    @model_validator(mode="after")
    def _check(self) -> "GridSpec":
        if self.values is None:
            if self.lo is None or self.hi is None:
                raise ValueError("give either values or lo and hi")
            if self.hi < self.lo:
                raise ValueError("hi must not be below lo")
        elif not self.values or any(v <= 0.0 for v in self.values):
            raise ValueError("grid values must be positive")
        return self

    def array(self) -> np.ndarray:
        if self.values is not None:
            return np.sort(np.asarray(self.values, dtype=float))
        if self.geometric:
            return np.geomspace(self.lo, self.hi, self.points)
        return np.linspace(self.lo, self.hi, self.points)


class ScanBlock(_Block):
    x: GridSpec
    n_max: int | None = Field(None, ge=1)
    deltas: list[float] | None = None
    window_log2: int | None = Field(None, ge=4, le=28)
    checkpoint: bool = True
    llt_n: list[int] = Field(default_factory=list)


class LowerBoundBlock(_Block):
    E: tuple[float, float]
    delta: float = Field(gt=0.0)
    n0: int = Field(1, ge=1)
    x: GridSpec


class SmallNBlock(_Block):
    x: GridSpec
    deltas: list[float] | None = None
    window_log2: int | None = Field(None, ge=4, le=28)
    lower_bound: LowerBoundBlock | None = None


class CriteriaBlock(_Block):
    L: RegVarFn = RegVarFn(alpha=0.0)
    T: float = Field(0.0, ge=0.0)
    eta: float = Field(1.0, gt=0.0, le=1.0)
    theta: float = Field(1.0, gt=0.0)
    x: GridSpec
    ell: RegVarFn | None = None
    M: RegVarFn | None = None
    density: tuple[float, float] | None = None
    ladder: bool = False
    ell_plus: RegVarFn | None = None
    ladder_c: float = Field(0.5, gt=0.0, lt=1.0)
    samples: int | None = Field(None, ge=1)
    window_log2: int | None = Field(None, ge=4, le=28)
    ground_truth: bool = False


class TiltBlock(_Block):
    s: list[float] = Field(min_length=1)
    n: list[int] = Field(min_length=1)
    x: list[float] = Field(min_length=1)


class RBlock(_Block):
    T: float = Field(0.0, ge=0.0)
    eta: float = Field(1.0, gt=0.0, le=1.0)
    r: float = Field(0.5, gt=0.0, le=1.0)
    c1: float = Field(0.5, gt=0.0)
    c2: float = Field(2.0, gt=0.0)
    L: RegVarFn = RegVarFn(alpha=0.0)
    deltas: list[float] = Field(min_length=1)
    x: list[float] = Field(min_length=1)
    mc_samples: int | None = Field(None, ge=1)


class LambdaBlock(_Block):
    n_lo: int = Field(ge=1)
    n_hi: int = Field(ge=1)
    samples: int = Field(ge=1)


class LLDBlock(_Block):
    n: list[int] = Field(min_length=1)
    s: list[float] = Field(min_length=1)
    x: list[float] = Field(min_length=1)
    window_log2: int | None = Field(None, ge=4, le=28)
    tilting: TiltBlock | None = None
    r: RBlock | None = None
    lambda_: LambdaBlock | None = Field(None, alias="lambda")

    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class PositivityBlock(_Block):
    n: int = Field(4096, ge=1)
    samples: int = Field(ge=1)


class LadderBlock(_Block):
    paths: int = Field(ge=1)
    step_cap: int | None = Field(None, ge=2)
    m: int = Field(4, ge=1)
    t: list[int] | None = None
    height_bins: int = Field(1 << 14, ge=2)
    x: GridSpec | None = None
    ell_plus: RegVarFn | None = None
    tail_fit: bool = True
    positivity: PositivityBlock | None = None


class LevyCriteriaBlock(_Block):
    L: RegVarFn = RegVarFn(alpha=0.0)
    T: float = Field(0.0, ge=0.0)
    eta: float = Field(1.0, gt=0.0, le=1.0)
    eps: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    window_log2: int | None = Field(None, ge=4, le=28)


class InfDivBlock(_Block):
    """The job's distribution is F_nu; mu is the Lévy mass beyond 1."""

    mu: float = Field(gt=0.0)
    small: ExplicitSpec | None = None
    x: GridSpec
    cell: float = Field(1.0, gt=0.0)
    samples: int = Field(ge=1)
    n_max: int | None = Field(None, ge=1)
    gap_window: tuple[int, int] = (-64, 64)
    criteria: LevyCriteriaBlock | None = None


class ProbePoint(_Block):
    n: int = Field(ge=1)
    k: int = Field(ge=0)
    x: float = Field(gt=0.0)
    eps: float = Field(0.1, gt=0.0, lt=1.0)
    gamma: float | None = Field(None, gt=0.0, lt=1.0)


class ProbeBlock(_Block):
    points: list[ProbePoint] = Field(min_length=1)
    samples: int = Field(ge=1)
    exact: bool = False
    window_log2: int | None = Field(None, ge=4, le=28)


_TASK_BLOCKS = {
    "renewal-scan": "scan",
    "small-n-table": "small_n",
    "criteria": "criteria",
    "lld-check": "lld",
    "ladder": "ladder",
    "infdiv": "infdiv",
    "probe": "probe",
}


class JobSpec(_Block):
    """One job: a law, a task and the task's parameter block."""

    task: Task
    distribution: DistributionSpec
    seed: int | None = Field(None, ge=0)
    overrides: dict[str, Any] = Field(default_factory=dict)
    scan: ScanBlock | None = None
    small_n: SmallNBlock | None = None
    criteria: CriteriaBlock | None = None
    lld: LLDBlock | None = None
    ladder: LadderBlock | None = None
    infdiv: InfDivBlock | None = None
    probe: ProbeBlock | None = None

    def check(self) -> "JobSpec":
        """Cross-field rules, raised with the path of the offending field."""
        block = _TASK_BLOCKS[self.task]
        if getattr(self, block) is None:
            raise ValidationFailure(block, f"task {self.task} needs this block")
        if self.seed is None and self.stochastic:
            raise ValidationFailure("seed", f"task {self.task} is stochastic and needs a seed")
        for name in sorted(self.overrides):
            if name not in Settings.model_fields:
                raise ValidationFailure(f"overrides.{name}", "unknown setting")
        return self

    @property
    def stochastic(self) -> bool:
        if self.task in STOCHASTIC_TASKS:
            return True
        if self.task == "criteria" and self.criteria is not None:
            return self.criteria.ladder
        if self.task == "lld-check" and self.lld is not None:
            return self.lld.r is not None or self.lld.lambda_ is not None
        return False

    @property
    def block(self) -> BaseModel:
        return getattr(self, _TASK_BLOCKS[self.task])

    def settings(self, base: Settings | None = None, **extra: Any) -> Settings:
        """Effective settings: base, then the spec's overrides, then CLI flags."""
        base = base or get_settings()
        update = {**self.overrides, **{k: v for k, v in extra.items() if v is not None}}
        if not update:
            return base
        try:
            return Settings.model_validate({**base.model_dump(), **update})
        except ValidationError as e:
            raise _failure(e, prefix="overrides") from e

    def canonical(self) -> dict:
        return self.model_dump(mode="json", by_alias=True, exclude_none=True)


def _failure(error: ValidationError, prefix: str = "") -> ValidationFailure:
    first = error.errors()[0]
    path = ".".join(str(p) for p in first["loc"])
    if prefix:
        path = f"{prefix}.{path}" if path else prefix
    return ValidationFailure(path or "<root>", first["msg"])


def parse_job(payload: dict | str) -> JobSpec:
    """Validate a job from a dict or a JSON string; errors carry the dotted field path."""
    try:
        if isinstance(payload, str):
            job = JobSpec.model_validate_json(payload)
        else:
            job = JobSpec.model_validate(payload)
    except ValidationError as e:
        raise _failure(e) from e
    return job.check()


def load_job(path: Path) -> JobSpec:
    """Load and validate a job spec file (JSON)."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ValidationFailure("spec", f"cannot read {path}: {e}") from e
    try:
        json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationFailure("spec", f"not valid JSON: {e}") from e
    return parse_job(text)
