"""Evaluation of the strong renewal conditions on a concrete law."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from rich.progress import Progress
from scipy.stats import norm

from .artifacts import SCHEMA_VERSION, to_jsonable
from .config import Settings, get_settings
from .distributions.base import LatticeDist
from .engine import RenewalEngine, default_ell
from .errors import NotApplicable, ValidationFailure
from .fluctuation import LadderSample, fit_ell_plus, sample_ladder
from .omega import OverflowProfile, density_at_scale, omega_scan
from .regvar import RegVarFn, karamata_u, power_function, snap_integers
from .stable import limit_for
from .trend import TrendVerdict, Verdict, bounded_verdict, combine, decay_verdict

logger = logging.getLogger(__name__)

_INDEX_SLACK = 1e-9
_ALPHA_TOL = 1e-12
_BUCKETS_PER_DECADE = 20


@dataclass
class ConditionRecord:
    """One evaluated condition: its trajectory, verdict and the sub-conditions it was built from."""

    name: str
    requirement: str
    verdict: Verdict
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    trend: TrendVerdict | None = None
    notes: dict = field(default_factory=dict)
    children: list["ConditionRecord"] = field(default_factory=list)
    required: bool = True

    @classmethod
    def combined(cls, name: str, requirement: str, children: list["ConditionRecord"], **notes) -> "ConditionRecord":
        verdict = combine([c.verdict for c in children if c.required])
        return cls(name=name, requirement=requirement, verdict=verdict, children=children, notes=dict(notes))

    def find(self, name: str) -> "ConditionRecord | None":
        if self.name == name:
            return self
        for child in self.children:
            found = child.find(name)
            if found is not None:
                return found
        return None

    def offending(self) -> list[str]:
        """Names of the required leaf conditions that were violated."""
        if self.verdict != "violated":
            return []
        if not self.children:
            return [self.name]
        names = []
        for child in self.children:
            if child.required:
                names.extend(child.offending())
        return names

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "requirement": self.requirement,
            "verdict": self.verdict,
            "required": self.required,
            "x": self.x,
            "values": self.values,
            "trend": None if self.trend is None else self.trend.to_dict(),
            "notes": self.notes,
            "children": [c.to_dict() for c in self.children],
        }


def _grid(x_grid) -> np.ndarray:
    x = np.sort(np.asarray(x_grid, dtype=float))
    if x.size == 0 or x[0] <= 0.0:
        raise ValidationFailure("x_grid", "scan points must be positive")
    return x


def _check_cutoff(L: RegVarFn, x: np.ndarray) -> np.ndarray:
    values = snap_integers(np.asarray(L(x), dtype=float))
    if np.any(values < 1.0 - 1e-12):
        raise ValidationFailure("L", "cutoff must be bounded below by 1")
    return values


def _check_eta_T(eta: float, T: float) -> None:
    if not 0.0 < eta <= 1.0:
        raise ValidationFailure("eta", "eta must lie in (0, 1]")
    if T < 0.0:
        raise ValidationFailure("T", "threshold must be nonnegative")


def _exponents(f: RegVarFn) -> np.ndarray:
    """(alpha, log power, log log power, log log log power)."""
    return np.array([f.alpha, f.log_power(1), f.log_power(2), f.log_power(3)])


def _lex_sign(vector: np.ndarray) -> int:
    for component in vector:
        if abs(component) > _ALPHA_TOL:
            return 1 if component > 0 else -1
    return 0


def _vanishing_ratio(name: str, requirement: str, top: RegVarFn, bottom: RegVarFn, x: np.ndarray) -> ConditionRecord:
    """top/bottom -> 0, decided from the regular-variation exponents."""
    sign = _lex_sign(_exponents(top) - _exponents(bottom))
    values = np.asarray(top(x), dtype=float) / np.asarray(bottom(x), dtype=float)
    verdict: Verdict = "satisfied-on-range" if sign < 0 else "violated"
    return ConditionRecord(
        name=name,
        requirement=requirement,
        verdict=verdict,
        x=x,
        values=values,
        notes={"rule": "exponent comparison", "exponent_gap": (_exponents(top) - _exponents(bottom)).tolist()},
    )


def _from_trend(name: str, requirement: str, x: np.ndarray, values: np.ndarray, trend: TrendVerdict, **notes) -> ConditionRecord:
    return ConditionRecord(
        name=name, requirement=requirement, verdict=trend.verdict, x=x, values=values, trend=trend, notes=dict(notes)
    )


def _bucket_sup(x: np.ndarray, values: np.ndarray, per_decade: int = _BUCKETS_PER_DECADE) -> tuple[np.ndarray, np.ndarray]:
    """Max of values per logarithmic bucket of x; x is sorted and positive."""
    keys = np.floor(np.log10(x) * per_decade).astype(np.int64)
    starts = np.flatnonzero(np.concatenate([[True], keys[1:] != keys[:-1]]))
    ends = np.concatenate([starts[1:] - 1, [x.size - 1]])
    return x[ends], np.maximum.reduceat(values, starts)


# ----------------------------------------------------------------------
# Low cut
# ----------------------------------------------------------------------


def check_lowcut(
    base: LatticeDist,
    L: RegVarFn,
    x_grid,
    theta: float = 1.0,
    ell: RegVarFn | None = None,
    settings: Settings | None = None,
    window_log2: int | None = None,
    progress: Progress | None = None,
) -> ConditionRecord:
    """
    L/ell -> 0 and (x/ell(x)) sum_{n < L(x)} F^{*n}(x+I] -> 0, exactly.

    The uniform form replaces F^{*n}(x+I] by sup_{t >= theta x} F^{*n}(t+I];
    lattice points beyond the convolution window do not enter the sup.
    """
    settings = settings or get_settings()
    ell = ell or default_ell(base)
    x = _grid(x_grid)
    if theta <= 0.0:
        raise ValidationFailure("theta", "theta must be positive")
    horizon = _check_cutoff(L, x)
    n_last = int(math.ceil(horizon.max())) - 1
    scale = x / np.asarray(ell(x), dtype=float)

    plain = np.zeros(x.size)
    uniform = np.zeros(x.size)
    if n_last >= 1:
        engine = RenewalEngine(base, x[-1], ell, window_log2, settings)
        task_id = progress.add_task("Low-cut sums", total=n_last) if progress else None
        power = engine.powers.unit()
        for n in range(1, n_last + 1):
            power = engine.powers.step(power)
            active = n < horizon
            plain += np.where(active, power.at(engine.cells(x, n)), 0.0)
            suffix = np.maximum.accumulate(power.values[::-1])[::-1]
            start = engine.cells(theta * x, n) - power.lo
            inside = active & (start < suffix.size)
            uniform += np.where(inside, suffix[np.clip(start, 0, suffix.size - 1)], 0.0)
            if progress and task_id is not None:
                progress.advance(task_id)

    ratio = _vanishing_ratio("cutoff-vs-ell", "L(x)/ell(x) -> 0", L, ell, x)
    if n_last < 1:
        plain_record = ConditionRecord(
            name="low-cut",
            requirement="(x/ell(x)) sum_{n<L(x)} F^{*n}(x+I] -> 0",
            verdict="satisfied-on-range",
            x=x,
            values=plain,
            notes={"rule": "empty sum"},
        )
    else:
        values = scale * plain
        plain_record = _from_trend(
            "low-cut", "(x/ell(x)) sum_{n<L(x)} F^{*n}(x+I] -> 0", x, values, decay_verdict(x, values, settings)
        )
    values = scale * uniform
    uniform_record = _from_trend(
        "low-cut-uniform",
        "(x/ell(x)) sum_{n<L(x)} sup_{t>=theta x} F^{*n}(t+I] -> 0",
        x,
        values,
        decay_verdict(x, values, settings),
        theta=theta,
    )
    uniform_record.required = False
    return ConditionRecord.combined(
        "low-cut-conditions",
        "cutoff L with negligible small-n mass",
        [ratio, plain_record, uniform_record],
        n_last=n_last,
    )


# ----------------------------------------------------------------------
# Overflow conditions
# ----------------------------------------------------------------------


def _overflow(base: LatticeDist, T: float, eta: float, x: np.ndarray) -> np.ndarray:
    profile = OverflowProfile(base, T, (1.0 - eta) * x[0], x[-1])
    return profile.overflow(x, eta)


def check_diff2(
    base: LatticeDist,
    ell: RegVarFn,
    L: RegVarFn,
    T: float,
    eta: float,
    x_grid,
    settings: Settings | None = None,
    name: str = "overflow-small-alpha",
) -> ConditionRecord:
    """I_eta(x, T) L(x)^2 / (ell(x)^2 ell^-(L(x))) -> 0."""
    settings = settings or get_settings()
    _check_eta_T(eta, T)
    x = _grid(x_grid)
    cutoff = _check_cutoff(L, x)
    overflow = _overflow(base, T, eta, x)
    inverse = np.array([ell.invert(float(v)) for v in cutoff])
    bound = np.asarray(ell(x), dtype=float) ** 2 * inverse / cutoff**2
    values = overflow / bound
    notes: dict = {"T": T, "eta": eta, "overflow": overflow, "bound": bound}
    if L.alpha > ell.alpha + _ALPHA_TOL:
        notes["cutoff_exponent_flag"] = f"L has exponent {L.alpha:g} above alpha = {ell.alpha:g}"
        logger.warning("cutoff exponent %g exceeds alpha %g", L.alpha, ell.alpha)
    return _from_trend(
        name,
        "I_eta(x,T) = o(ell(x)^2 ell^-(L(x)) / L(x)^2)",
        x,
        values,
        decay_verdict(x, values, settings),
        **notes,
    )


def check_diff_half(
    base: LatticeDist,
    ell: RegVarFn,
    L: RegVarFn,
    T: float,
    eta: float,
    x_grid,
    settings: Settings | None = None,
    name: str = "overflow-half",
) -> ConditionRecord:
    """
    I_eta(x, T) against k(x) = ell(x)^2/u(x).

    If u(x)/u(ell^-(L(x))) stays within u_ratio_threshold over the top decade
    the requirement is O(k), otherwise o(k).
    """
    settings = settings or get_settings()
    _check_eta_T(eta, T)
    x = _grid(x_grid)
    cutoff = _check_cutoff(L, x)
    overflow = _overflow(base, T, eta, x)
    u = np.array([karamata_u(ell, float(max(xi, 1.0))) for xi in x])
    k = np.where(u > 0.0, np.asarray(ell(x), dtype=float) ** 2 / np.where(u > 0.0, u, 1.0), math.inf)
    anchor = np.array([max(1.0, ell.invert(float(v))) for v in cutoff])
    u_anchor = np.array([karamata_u(ell, float(a)) for a in anchor])
    with np.errstate(divide="ignore", invalid="ignore"):
        u_ratio = np.where(u_anchor > 0.0, u / u_anchor, math.inf)
    top = x >= x[-1] / 10.0
    bounded_branch = bool(np.max(u_ratio[top]) <= settings.u_ratio_threshold)
    values = overflow / k
    trend = bounded_verdict(x, values, settings) if bounded_branch else decay_verdict(x, values, settings)
    return _from_trend(
        name,
        "I_eta(x,T) = O(k(x)) if u(x)/u(ell^-(L(x))) -> 1, else o(k(x))",
        x,
        values,
        trend,
        branch="O(k)" if bounded_branch else "o(k)",
        u_ratio=u_ratio,
        overflow=overflow,
        k=k,
        T=T,
        eta=eta,
    )


def _overflow_record(
    base: LatticeDist, ell: RegVarFn, L: RegVarFn, T: float, eta: float, x: np.ndarray, settings: Settings, prefix: str = ""
) -> ConditionRecord:
    if ell.alpha < 0.5 - _ALPHA_TOL:
        return check_diff2(base, ell, L, T, eta, x, settings, name=prefix + "overflow-small-alpha")
    if abs(ell.alpha - 0.5) <= _ALPHA_TOL:
        return check_diff_half(base, ell, L, T, eta, x, settings, name=prefix + "overflow-half")
    raise NotApplicable(f"overflow conditions need exponent <= 1/2, got {ell.alpha:g}")


# ----------------------------------------------------------------------
# Prior cutoff
# ----------------------------------------------------------------------


@dataclass
class CutoffFamily:
    """Admissible cutoffs L from a declared M, with the scans that justify them."""

    mode: str
    g: RegVarFn
    gamma_min: float
    eps_max: float
    branch1_applies: bool
    scan: ConditionRecord
    tail_check: ConditionRecord

    @property
    def admissible(self) -> bool:
        return self.scan.verdict != "violated" and self.tail_check.verdict != "violated"

    @property
    def branch1_power_sup(self) -> float:
        """L = x^p is admissible through the log-gap branch for every p below this."""
        return self.g.alpha if self.branch1_applies else 0.0

    @property
    def branch2_exponents_sup(self) -> np.ndarray:
        return self.eps_max * _exponents(self.g)

    def branch1_example(self, margin: float = 0.1) -> RegVarFn:
        """g/(ln x)^gamma with gamma = gamma_min + margin."""
        if not self.branch1_applies:
            raise NotApplicable("g does not dominate (ln x)^gamma for gamma above the minimum")
        return self.g.times_power(0.0, {1: -(self.gamma_min + margin)})

    def branch2_example(self, fraction: float = 0.9) -> RegVarFn:
        """g^eps with eps = fraction * eps_max."""
        return self.g ** (fraction * self.eps_max)

    def admits(self, L: RegVarFn) -> dict[str, bool]:
        """Whether L lies in either admissible family (exponent comparison)."""
        target = _exponents(L)
        gap = _exponents(self.g) - target
        first = bool(self.branch1_applies and (gap[0] > _ALPHA_TOL or (abs(gap[0]) <= _ALPHA_TOL and gap[1] > self.gamma_min + _ALPHA_TOL)))
        second = False
        g_exp = _exponents(self.g)
        lead = next((i for i, v in enumerate(g_exp) if abs(v) > _ALPHA_TOL), None)
        if lead is not None and g_exp[lead] > 0 and _lex_sign(target) > 0:
            before = target[:lead]
            if np.all(np.abs(before) <= _ALPHA_TOL):
                if abs(target[lead]) <= _ALPHA_TOL:
                    second = True
                else:
                    second = bool(target[lead] < self.eps_max * g_exp[lead] - _ALPHA_TOL)
        return {"log-gap": first, "power-fraction": second}

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "g": self.g.model_dump(),
            "gamma_min": self.gamma_min,
            "eps_max": self.eps_max,
            "branch1_applies": self.branch1_applies,
            "branch1_power_sup": self.branch1_power_sup,
            "branch2_exponents_sup": self.branch2_exponents_sup.tolist(),
            "admissible": self.admissible,
            "scan": self.scan.to_dict(),
            "tail_check": self.tail_check.to_dict(),
        }


def prior_cutoff(
    base: LatticeDist,
    ell: RegVarFn,
    M: RegVarFn,
    x_lo: float,
    x_hi: float,
    mode: Literal["walk", "ladder"] = "walk",
    ladder_c: float = 0.5,
    settings: Settings | None = None,
) -> CutoffFamily:
    """
    Admissible cutoffs from omega(x) << x/M(x) = o(ell(x)^2).

    With g(x) = ell(x) sqrt(M(x)/x) (walk) or x^{2 c alpha varrho} sqrt(M(x)/x)
    (ladder), L << g/(ln x)^gamma works for gamma above alpha + beta when g
    dominates such a log power, and 1 << L << g^eps works for eps below
    1/(1 + alpha + beta). In ladder mode alpha is replaced by alpha varrho.
    """
    settings = settings or get_settings()
    beta = M.alpha
    x_lo = max(x_lo, base.h)
    probe = np.geomspace(max(x_lo, M.floor), x_hi, 64)
    if np.any(np.asarray(M.log_derivative(probe), dtype=float) < -1e-12):
        raise ValidationFailure("M", "M must be nondecreasing")
    if mode == "walk":
        alpha = ell.alpha
        if alpha > 0.5 + _ALPHA_TOL:
            raise NotApplicable("prior cutoffs need alpha <= 1/2")
        if not 1.0 - 2.0 * alpha - _ALPHA_TOL <= beta <= 1.0 + _ALPHA_TOL:
            raise ValidationFailure("M.alpha", f"beta must lie in [1 - 2 alpha, 1] = [{1 - 2 * alpha:g}, 1]")
        g = (ell * M**0.5).times_power(-0.5)
    elif mode == "ladder":
        if not 0.0 < ladder_c < 1.0:
            raise ValidationFailure("ladder_c", "c must lie in (0, 1)")
        alpha = ell.alpha * limit_for(base).varrho
        if not 1.0 - 2.0 * ladder_c * alpha - _ALPHA_TOL <= beta <= 1.0 + _ALPHA_TOL:
            raise ValidationFailure("M.alpha", "beta must lie in [1 - 2 c alpha varrho, 1]")
        g = (power_function(2.0 * ladder_c * alpha) * M**0.5).times_power(-0.5)
    else:
        raise ValidationFailure("mode", f"unknown mode {mode!r}")

    gamma_min = alpha + beta
    g_exp = _exponents(g)
    branch1 = bool(g_exp[0] > _ALPHA_TOL or (abs(g_exp[0]) <= _ALPHA_TOL and g_exp[1] > gamma_min + _ALPHA_TOL))

    scan = omega_scan(base, x_lo, x_hi)
    right = scan.cell_left + base.h
    keep = right > 0.0
    bx, sup = _bucket_sup(right[keep], scan.cell_sup[keep])
    weighted = sup * np.asarray(M(bx), dtype=float) / bx
    trend = bounded_verdict(bx, weighted, settings)
    worst = int(np.argmax(weighted))
    scan_record = _from_trend(
        "omega-vs-x-over-M",
        "omega(x) << x/M(x)",
        bx,
        weighted,
        trend,
        worst_x=float(bx[worst]),
        worst_value=float(weighted[worst]),
    )
    if trend.verdict == "violated":
        logger.warning("omega M(x)/x is unbounded on the scan; worst at x=%g", bx[worst])

    tail_gap = np.array([1.0 - beta - 2.0 * ell.alpha, -M.log_power(1) - 2.0 * ell.log_power(1),
                         -M.log_power(2) - 2.0 * ell.log_power(2), -M.log_power(3) - 2.0 * ell.log_power(3)])
    tail_values = bx / np.asarray(M(bx), dtype=float) / np.asarray(ell(bx), dtype=float) ** 2
    tail_record = ConditionRecord(
        name="x-over-M-vs-ell-squared",
        requirement="x/M(x) = o(ell(x)^2)",
        verdict="satisfied-on-range" if _lex_sign(tail_gap) < 0 else "violated",
        x=bx,
        values=tail_values,
        notes={"rule": "exponent comparison", "exponent_gap": tail_gap.tolist()},
    )
    return CutoffFamily(
        mode=mode,
        g=g,
        gamma_min=gamma_min,
        eps_max=1.0 / (1.0 + alpha + beta),
        branch1_applies=branch1,
        scan=scan_record,
        tail_check=tail_record,
    )


# ----------------------------------------------------------------------
# Density at scale
# ----------------------------------------------------------------------


def check_density_srt(
    base: LatticeDist,
    T: float,
    c: float,
    s: float,
    x_lo: float,
    x_hi: float,
    ell: RegVarFn | None = None,
    settings: Settings | None = None,
) -> ConditionRecord:
    """omega(x) = O(x^c) and E_T has density O(x^{-c}) at scale x^s."""
    settings = settings or get_settings()
    ell = ell or default_ell(base)
    alpha = ell.alpha
    if not 0.0 < c < 2.0 * alpha:
        raise ValidationFailure("c", "c must lie in (0, 2 alpha)")
    if not c <= s < 2.0 * alpha:
        raise ValidationFailure("s", "s must lie in [c, 2 alpha)")
    scan = omega_scan(base, max(x_lo, base.h), x_hi)
    right = scan.cell_left + base.h
    keep = right > 0.0
    bx, sup = _bucket_sup(right[keep], scan.cell_sup[keep])
    growth = sup / bx**c
    growth_record = _from_trend("omega-growth", "omega(x) = O(x^c)", bx, growth, bounded_verdict(bx, growth, settings), c=c)
    E = scan.exceedance(T)
    if E.is_empty:
        density_record = ConditionRecord(
            name="exceedance-density",
            requirement="E_T has density O(x^-c) at scale x^s",
            verdict="satisfied-on-range",
            notes={"rule": "E_T empty", "T": T},
        )
    else:
        report = density_at_scale(scan, T, c, s)
        density_record = _from_trend(
            "exceedance-density",
            "E_T has density O(x^-c) at scale x^s",
            report.x,
            report.per_x_sup,
            report.trend,
            constant=report.constant,
            worst_x=report.worst_x,
            worst_y=report.worst_y,
            worst_measure=report.worst_measure,
        )
    return ConditionRecord.combined(
        "density-at-scale", "omega = O(x^c) with sparse exceedances", [growth_record, density_record], c=c, s=s, T=T
    )


# ----------------------------------------------------------------------
# Infinitely divisible laws
# ----------------------------------------------------------------------


def check_levy_criteria(
    nu: LatticeDist,
    L: RegVarFn,
    T: float,
    eta: float,
    eps_list,
    x_grid,
    ell_nu: RegVarFn | None = None,
    mu: float | None = None,
    settings: Settings | None = None,
    window_log2: int | None = None,
    progress: Progress | None = None,
) -> ConditionRecord:
    """
    The walk conditions applied to the normalised jump law F_nu.

    The low cut is replaced by its band form: sum over n < L(x) of
    sup_{|t-x| <= eps x} F_nu^{*n}(t+I], normalised by x/ell_nu(x), for every
    eps; the smallest eps decides.
    """
    settings = settings or get_settings()
    if (mu is not None and mu <= 0.0) or nu.total_mass <= 0.0:
        raise ValidationFailure("nu", "Lévy measure has no mass beyond 1")
    ell_nu = ell_nu or default_ell(nu)
    if ell_nu.alpha > 0.5 + _ALPHA_TOL:
        raise NotApplicable("Lévy criteria need alpha <= 1/2")
    _check_eta_T(eta, T)
    x = _grid(x_grid)
    eps = sorted(float(e) for e in eps_list)
    if not eps or eps[0] <= 0.0 or eps[-1] >= 1.0:
        raise ValidationFailure("eps_list", "band widths must lie in (0, 1)")
    horizon = _check_cutoff(L, x)
    n_last = int(math.ceil(horizon.max())) - 1
    scale = x / np.asarray(ell_nu(x), dtype=float)
    bands = np.zeros((len(eps), x.size))
    if n_last >= 1:
        engine = RenewalEngine(nu, (1.0 + eps[-1]) * x[-1] + nu.h, ell_nu, window_log2, settings)
        lo_cells = [engine.cells((1.0 - e) * x, 0) for e in eps]
        hi_cells = [engine.cells((1.0 + e) * x, 0) for e in eps]
        power = engine.powers.unit()
        task_id = progress.add_task("Band sums", total=n_last) if progress else None
        for n in range(1, n_last + 1):
            power = engine.powers.step(power)
            values = power.values
            for i in range(len(eps)):
                lo = np.clip(lo_cells[i] - power.lo, 0, values.size)
                hi = np.clip(hi_cells[i] - power.lo + 1, 0, values.size)
                for k in range(x.size):
                    if n < horizon[k] and hi[k] > lo[k]:
                        bands[i, k] += float(values[lo[k] : hi[k]].max())
            if progress and task_id is not None:
                progress.advance(task_id)
    children = [_vanishing_ratio("cutoff-vs-ell", "L(x)/ell_nu(x) -> 0", L, ell_nu, x)]
    for i, e in enumerate(eps):
        values = scale * bands[i]
        if n_last < 1:
            record = ConditionRecord(
                name=f"band-low-cut-{e:g}",
                requirement="(x/ell_nu(x)) sum_{n<L(x)} sup_{|t-x|<=eps x} F_nu^{*n}(t+I] -> 0",
                verdict="satisfied-on-range",
                x=x,
                values=values,
                notes={"rule": "empty sum", "eps": e},
            )
        else:
            record = _from_trend(
                f"band-low-cut-{e:g}",
                "(x/ell_nu(x)) sum_{n<L(x)} sup_{|t-x|<=eps x} F_nu^{*n}(t+I] -> 0",
                x,
                values,
                decay_verdict(x, values, settings),
                eps=e,
            )
        record.required = i == 0
        children.append(record)
    children.append(_overflow_record(nu, ell_nu, L, T, eta, x, settings, prefix="levy-"))
    return ConditionRecord.combined("levy-conditions", "walk conditions on the normalised Lévy jump law", children, mu=mu)


# ----------------------------------------------------------------------
# Ladder
# ----------------------------------------------------------------------


def check_ladder_criteria(
    base: LatticeDist,
    L: RegVarFn,
    T: float,
    eta: float,
    x_grid,
    ell: RegVarFn | None = None,
    ell_plus: RegVarFn | None = None,
    ladder: LadderSample | None = None,
    seed: int = 0,
    samples: int | None = None,
    settings: Settings | None = None,
    progress: Progress | None = None,
    threads: int | None = None,
    window_log2: int | None = None,
) -> ConditionRecord:
    """
    Ladder-height conditions: F̄_+(x) L(x) -> 0, the ladder low cut by
    simulation, and I_eta of the walk's omega against ell_+ scales.

    The low cut sums P(H_n in x+I] over n < L(x); ladder heights increase
    strictly, so at most one n hits a cell and the sum is the probability of
    a single event with an exact binomial band. The verdict is taken on the
    upper band as well as the estimate. The overflow of the empirical ladder
    law is reported alongside without entering the verdict.
    """
    settings = settings or get_settings()
    ell = ell or default_ell(base)
    _check_eta_T(eta, T)
    x = _grid(x_grid)
    varrho = limit_for(base).varrho
    product = ell.alpha * varrho
    if product > 0.5 + _ALPHA_TOL:
        raise NotApplicable(f"alpha*varrho = {product:.6g} exceeds 1/2")
    if base.p_plus <= 0.0:
        raise ValidationFailure("base", "walk never steps up (p+ = 0)")
    if base.p_plus >= 1.0:
        # H_n = S_n: the walk conditions are the ladder conditions
        children = [check_lowcut(base, L, x, 1.0, ell, settings, window_log2, progress)]
        children.append(_overflow_record(base, ell, L, T, eta, x, settings, prefix="ladder-"))
        return ConditionRecord.combined(
            "ladder-conditions", "ladder conditions (one-sided walk)", children, reduction="ladder heights equal the walk"
        )
    if base.a != 0.0:
        raise ValidationFailure("a", "ladder work needs a lattice through the origin (a = 0)")

    cutoff = _check_cutoff(L, x)
    n_needed = max(1, int(math.ceil(cutoff.max())) - 1)
    cells = np.floor(x / base.h + _INDEX_SLACK).astype(np.int64) + 1
    if ladder is None:
        ladder = sample_ladder(
            base,
            samples or settings.mc_samples,
            seed=seed,
            m=max(4, n_needed),
            height_bins=max(1 << 14, int(cells[-1]) + 2),
            settings=settings,
            progress=progress,
            threads=threads,
        )
    if ladder.m < n_needed:
        raise ValidationFailure("ladder.m", f"need the first {n_needed} ladder heights, sample keeps {ladder.m}")

    paths = ladder.paths
    hits = np.zeros(x.size)
    for k, (cell, lim) in enumerate(zip(cells, cutoff)):
        count = max(0, int(math.ceil(lim)) - 1)
        if count:
            hits[k] = np.count_nonzero(np.any(ladder.asc_heights[:, :count] == cell, axis=1))
    probability = hits / paths
    sigma = np.sqrt(np.maximum(probability * (1.0 - probability), 0.0) / max(paths, 1))
    z = float(norm.ppf(0.5 + settings.confidence / 2.0))
    heights = np.sort(ladder.first_heights)
    completed = max(heights.size, 1)
    fbar = (heights.size - np.searchsorted(heights, cells - 1, side="right")) / completed
    values = x * fbar * probability
    upper = x * fbar * (probability + z * sigma)
    point = decay_verdict(x, values, settings)
    band = decay_verdict(x, upper, settings)
    if point.verdict == "satisfied-on-range" and band.verdict != "satisfied-on-range":
        verdict: Verdict = "inconclusive"
    else:
        verdict = point.verdict
    lowcut = ConditionRecord(
        name="ladder-low-cut",
        requirement="x F̄_+(x) sum_{n<L(x)} P(H_n in x+I] -> 0",
        verdict=verdict,
        x=x,
        values=values,
        trend=point,
        notes={"upper_band": upper, "upper_trend": band.to_dict(), "paths": paths, "censoring": ladder.censoring_fraction},
    )

    fit_based = ell_plus is None
    if ell_plus is None:
        ell_plus = fit_ell_plus(ladder, product)
    ratio = _vanishing_ratio("cutoff-vs-ell-plus", "F̄_+(x) L(x) -> 0", L, ell_plus, x)
    ratio.notes["ell_plus_fit_based"] = fit_based
    overflow = _overflow_record(base, ell_plus, L, T, eta, x, settings, prefix="ladder-")
    overflow.notes["ell_plus_fit_based"] = fit_based

    empirical = ladder_law(ladder)
    reach = x[x <= heights[-1] * base.h] if heights.size else x[:0]
    plus_overflow = _overflow(empirical, T, eta, reach) if reach.size else np.zeros(0)
    informational = ConditionRecord(
        name="ladder-omega-overflow",
        requirement="I_{+,eta}(x,T) from the empirical ladder law",
        verdict="inconclusive",
        x=reach,
        values=plus_overflow,
        notes={"estimate": "Monte Carlo"},
        required=False,
    )
    return ConditionRecord.combined(
        "ladder-conditions",
        "ladder conditions",
        [ratio, lowcut, overflow, informational],
        alpha_varrho=product,
        ell_plus=ell_plus.model_dump(),
    )


def ladder_law(ladder: LadderSample) -> LatticeDist:
    """The empirical first ladder height law on 0..bins-1."""
    counts = ladder.f_plus
    total = counts.sum()
    if total <= 0.0:
        raise ValidationFailure("ladder", "no completed ladder epochs inside the histogram")
    return LatticeDist(h=ladder.h, a=0.0, i_min=0, masses=counts / total, kind="empirical-ladder")


# ----------------------------------------------------------------------
# Report
# ----------------------------------------------------------------------


@dataclass
class CriterionInputs:
    """The declared cutoff, threshold and optional extras for one criterion run."""

    dist: LatticeDist
    L: RegVarFn
    T: float
    eta: float
    x_grid: np.ndarray
    ell: RegVarFn | None = None
    theta: float = 1.0
    M: RegVarFn | None = None
    density: tuple[float, float] | None = None
    ladder: bool = False
    ell_plus: RegVarFn | None = None
    ladder_c: float = 0.5
    seed: int = 0
    samples: int | None = None
    window_log2: int | None = None

    def __post_init__(self) -> None:
        _check_eta_T(self.eta, self.T)
        self.x_grid = _grid(self.x_grid)
        _check_cutoff(self.L, self.x_grid)
        if self.ell is None:
            self.ell = default_ell(self.dist)

    def describe(self) -> dict:
        return {
            "L": self.L.model_dump(),
            "T": self.T,
            "eta": self.eta,
            "theta": self.theta,
            "ell": self.ell.model_dump() if self.ell else None,
            "M": self.M.model_dump() if self.M else None,
            "density": list(self.density) if self.density else None,
            "ladder": self.ladder,
            "ell_plus": self.ell_plus.model_dump() if self.ell_plus else None,
            "x_grid": self.x_grid,
        }


@dataclass
class CriterionReport:
    records: list[ConditionRecord]
    overall: Verdict
    thresholds: dict
    settings: dict
    seed: int
    distribution: dict
    inputs: dict
    ground_truth: dict | None = None
    schema_version: str = SCHEMA_VERSION

    def offending(self) -> list[str]:
        names = []
        for record in self.records:
            if record.required:
                names.extend(record.offending())
        return names

    def to_dict(self) -> dict:
        return to_jsonable(
            {
                "schema_version": self.schema_version,
                "overall": self.overall,
                "offending": self.offending(),
                "thresholds": self.thresholds,
                "settings": self.settings,
                "seed": self.seed,
                "distribution": self.distribution,
                "inputs": self.inputs,
                "records": [r.to_dict() for r in self.records],
                "ground_truth": self.ground_truth,
            }
        )


def _ground_truth(inputs: CriterionInputs, overall: Verdict, settings: Settings, progress: Progress | None) -> dict:
    """small-n table on the top decade of the grid; its shape should agree with the verdict."""
    engine = RenewalEngine(inputs.dist, inputs.x_grid[-1], inputs.ell, inputs.window_log2, settings)
    top = inputs.x_grid[inputs.x_grid >= inputs.x_grid[-1] / 10.0]
    table = engine.small_n_limit_table(top, progress=progress)
    if overall == "satisfied-on-range":
        consistent = bool(table.delta_slope > 0.0)
    elif overall == "violated":
        consistent = bool(table.floor > settings.negligible_level)
    else:
        consistent = None
    return {"table": table.summary(), "consistent": consistent}


def evaluate_criteria(
    inputs: CriterionInputs,
    settings: Settings | None = None,
    progress: Progress | None = None,
    threads: int | None = None,
    with_ground_truth: bool = False,
) -> CriterionReport:
    """
    Evaluate every condition the declared regime calls for.

    Exactly one overflow branch runs, chosen by alpha: below 1/2 the
    o(ell^2 ell^-(L)/L^2) form, at 1/2 the k(x) form. For alpha in (1/2, 1)
    no extra condition is needed. The ladder conditions replace the walk
    ones when requested. Density-at-scale and prior-cutoff records are
    reported but never required.
    """
    settings = settings or get_settings()
    base, ell, x = inputs.dist, inputs.ell, inputs.x_grid
    records: list[ConditionRecord] = []
    alpha = ell.alpha
    if inputs.ladder:
        records.append(
            check_ladder_criteria(
                base, inputs.L, inputs.T, inputs.eta, x, ell, inputs.ell_plus,
                seed=inputs.seed, samples=inputs.samples, settings=settings, progress=progress,
                threads=threads, window_log2=inputs.window_log2,
            )
        )
    elif alpha <= 0.5 + _ALPHA_TOL:
        records.append(check_lowcut(base, inputs.L, x, inputs.theta, ell, settings, inputs.window_log2, progress))
        records.append(_overflow_record(base, ell, inputs.L, inputs.T, inputs.eta, x, settings))
    elif alpha < 1.0:
        records.append(
            ConditionRecord(
                name="unconditional",
                requirement="alpha in (1/2, 1)",
                verdict="satisfied-on-range",
                notes={"rule": "no further condition for alpha in (1/2, 1)", "alpha": alpha},
            )
        )
    else:
        raise NotApplicable(f"walk criteria cover alpha <= 1, got {alpha:g}; request the ladder conditions")

    if inputs.density is not None:
        c, s = inputs.density
        record = check_density_srt(base, inputs.T, c, s, x[0], x[-1], ell, settings)
        record.required = False
        records.append(record)
    if inputs.M is not None:
        family = prior_cutoff(base, ell, inputs.M, x[0], x[-1], "ladder" if inputs.ladder else "walk", inputs.ladder_c, settings)
        admitted = family.admits(inputs.L)
        verdict: Verdict = "satisfied-on-range" if family.admissible and any(admitted.values()) else "violated"
        records.append(
            ConditionRecord(
                name="prior-cutoff",
                requirement="L within the admissible family of M",
                verdict=verdict,
                children=[family.scan, family.tail_check],
                notes={"family": family.to_dict(), "admits": admitted},
                required=False,
            )
        )

    overall = combine([r.verdict for r in records if r.required])
    logger.info("criteria overall verdict: %s", overall)
    report = CriterionReport(
        records=records,
        overall=overall,
        thresholds=settings.trend_thresholds(),
        settings=settings.model_dump(),
        seed=inputs.seed,
        distribution=base.describe(),
        inputs=inputs.describe(),
    )
    if with_ground_truth and not inputs.ladder and alpha <= 0.5 + _ALPHA_TOL:
        report.ground_truth = _ground_truth(inputs, overall, settings, progress)
    return report
