"""Exponential tilting, the local large deviation bound and the small-n R functional."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from rich.progress import Progress
from scipy.special import comb
from scipy.stats import binomtest, norm

from .artifacts import write_rows, write_table
from .chunking import ChunkPlan, run_chunks
from .config import Settings, get_settings
from .convolution import ConvPowerSet, naive_power, window_bounds
from .distributions.base import LatticeDist
from .engine import default_ell
from .errors import ValidationFailure
from .omega import ExcessCells, OverflowProfile
from .regvar import NormingSeq, RegVarFn, karamata_u, snap_integers, truncated_moment
from .sampling import WalkSampler, sum_groups

logger = logging.getLogger(__name__)

_INDEX_SLACK = 1e-9
# e^{-40} relative weight is where the tilted left tail is cut
_TILT_CUTOFF = 40.0
_MAX_TILT_POINTS = 1 << 24
_MAX_ROW_DRAWS = 1 << 22
_MAX_N_REPS = 64
_EXACT_N_TABLES = 64
_MAX_IDENTITY_POWER = 16


def _kappa(alpha: float) -> int:
    return int(math.floor(1.0 / alpha))


def _cell(base: LatticeDist, x: float, n: int) -> int:
    """Index k of the point n*a + k*h of S_n in (x, x+h]."""
    return int(math.floor((x - n * base.a) / base.h + _INDEX_SLACK)) + 1


def _check_pair(base: LatticeDist, s: float) -> int:
    if s <= 0.0:
        raise ValidationFailure("s", "cut level must be positive")
    j_s = base.index_floor(s)
    if base.total_mass - base.tail(s) <= 0.0:
        raise ValidationFailure("s", f"no mass at or below s={s:g}")
    return j_s


# ----------------------------------------------------------------------
# Truncation and tilting
# ----------------------------------------------------------------------


def truncate(base: LatticeDist, s: float) -> LatticeDist:
    """
    The sub-probability law P(X in dx, X <= s).

    The left tail is kept, the right tail beyond s is dropped, and window
    points between x_max and s are filled from the tail model.
    """
    j_s = _check_pair(base, s)
    if j_s < base.i_min:
        raise ValidationFailure("s", f"no stored mass at or below s={s:g}")
    if j_s - base.i_min + 1 > _MAX_TILT_POINTS:
        raise ValidationFailure("s", f"truncation at s={s:g} needs {j_s - base.i_min + 1} points")
    masses = base.vector(base.i_min, j_s)
    return LatticeDist(
        h=base.h,
        a=base.a,
        i_min=base.i_min,
        masses=masses,
        right_tail=base.right_tail,
        tail_mass_left=base.tail_mass_left,
        left_tail_ratio=base.left_tail_ratio,
        kind="truncated",
        tail_band=base.tail_band,
        params={"s": s, "source": base.kind},
    )


@dataclass(frozen=True)
class TiltedLaw:
    """
    G_s(dx) = psi(s)^{-1} e^{x/s} P(X in dx, X <= s) on the indices lo..lo+len-1.

    Points below lo carry tilted weight at most left_weight (relative to psi),
    which is where e^{x/s} drops under e^{-40}.
    """

    base: LatticeDist
    s: float
    psi: float
    lo: int
    masses: np.ndarray
    raw: np.ndarray
    left_weight: float
    log_psi_bound: float

    @property
    def hi(self) -> int:
        return self.lo + self.masses.size - 1

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @property
    def within_bound(self) -> bool:
        """ln psi(s) <= 2 mu_1(s)/s."""
        return math.log(self.psi) <= self.log_psi_bound + 1e-12

    def as_dist(self) -> LatticeDist:
        return LatticeDist(
            h=self.base.h,
            a=self.base.a,
            i_min=self.lo,
            masses=self.masses,
            kind="tilted",
            params={"s": self.s, "psi": self.psi},
        )

    def describe(self) -> dict:
        return {
            "s": self.s,
            "psi": self.psi,
            "log_psi": math.log(self.psi),
            "log_psi_bound": self.log_psi_bound,
            "within_bound": self.within_bound,
            "support": [self.lo, self.hi],
            "left_weight": self.left_weight,
        }


def tilt(base: LatticeDist, s: float) -> TiltedLaw:
    """Tilt the law at level s; psi(s) is the exact lattice sum over the kept points."""
    j_s = _check_pair(base, s)
    lo = base.index_floor(-_TILT_CUTOFF * s)
    if math.isfinite(base.min_support_index):
        lo = max(lo, int(base.min_support_index))
    if j_s < lo:
        raise ValidationFailure("s", f"no mass at or below s={s:g}")
    if j_s - lo + 1 > _MAX_TILT_POINTS:
        raise ValidationFailure("s", f"tilting at s={s:g} needs {j_s - lo + 1} points")
    idx = np.arange(lo, j_s + 1, dtype=np.int64)
    raw = base.mass_index(idx)
    weights = raw * np.exp(base.position(idx) / s)
    psi = float(weights.sum())
    if psi <= 0.0:
        raise ValidationFailure("s", f"no mass at or below s={s:g}")
    below = 1.0 - base.survival_index(lo - 1) if lo > base.min_support_index else 0.0
    left_weight = max(below, 0.0) * math.exp(float(base.position(lo - 1)) / s) / psi
    mu1 = truncated_moment(base, 1, s).value
    return TiltedLaw(
        base=base,
        s=s,
        psi=psi,
        lo=lo,
        masses=weights / psi,
        raw=raw,
        left_weight=left_weight,
        log_psi_bound=2.0 * mu1 / s,
    )


@dataclass(frozen=True)
class TiltingCheck:
    """Both sides of P(S_n in x+I, max X_i <= s) = psi^n E[e^{-S~_n/s}; S~_n in x+I]."""

    n: int
    s: float
    x: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def max_abs_diff(self) -> float:
        return float(np.max(np.abs(self.lhs - self.rhs))) if self.x.size else 0.0


def tilting_identity(base: LatticeDist, s: float, n: int, x_list) -> TiltingCheck:
    """
    Evaluate both sides of the tilting identity by direct convolution.

    Both sides run over the steps the tilted law keeps, on which the
    identity is exact, so the two columns agree to roundoff.
    """
    if not 1 <= n <= _MAX_IDENTITY_POWER:
        raise ValidationFailure("n", f"n must lie in [1, {_MAX_IDENTITY_POWER}]")
    law = tilt(base, s)
    x = np.asarray(x_list, dtype=float)
    untilted = naive_power(law.raw, n)
    tilted = naive_power(law.masses, n)
    offset = n * law.lo
    lhs = np.zeros(x.size)
    rhs = np.zeros(x.size)
    for i, xi in enumerate(x):
        k = _cell(base, float(xi), n) - offset
        if 0 <= k < untilted.size:
            position = n * base.a + base.h * (k + offset)
            lhs[i] = untilted[k]
            rhs[i] = law.psi**n * math.exp(-position / s) * tilted[k]
    return TiltingCheck(n=n, s=s, x=x, lhs=lhs, rhs=rhs)


def cut_moment_threshold(base: LatticeDist, grid) -> tuple[float | None, np.ndarray]:
    """
    Smallest grid level theta with mu_2(s) mu_0(s) > 2 mu_1(s)^2 for every grid s >= theta.

    Returns theta (None when the inequality fails at the largest level) and the
    per-level truth values.
    """
    s = np.sort(np.asarray(grid, dtype=float))
    if s.size == 0 or s[0] <= 0.0:
        raise ValidationFailure("grid", "cut levels must be positive")
    holds = np.array(
        [
            truncated_moment(base, 2, si).value * truncated_moment(base, 0, si).value
            > 2.0 * truncated_moment(base, 1, si).value ** 2
            for si in s
        ]
    )
    if not holds[-1]:
        return None, holds
    failing = np.flatnonzero(~holds)
    start = int(failing[-1]) + 1 if failing.size else 0
    return float(s[start]), holds


# ----------------------------------------------------------------------
# Local large deviation bound
# ----------------------------------------------------------------------


@dataclass
class LLDTable:
    """lhs = P(S_n in x+I, max X_i <= s) against (1/s + 1/a_n) e^{-x/s + c n/ell(s)}."""

    c: float
    rows: list[dict] = field(default_factory=list)

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r["ratio"] for r in self.rows])

    @property
    def sup_ratio(self) -> float:
        return float(np.max(self.ratios)) if self.rows else 0.0

    def per_n_sup(self) -> tuple[np.ndarray, np.ndarray]:
        ns = np.array(sorted({r["n"] for r in self.rows}))
        sups = np.array([max(r["ratio"] for r in self.rows if r["n"] == n) for n in ns])
        return ns, sups

    def trending_up(self, settings: Settings | None = None) -> bool:
        """Whether the largest-n sup ratio leaves the median band of the per-n sups."""
        settings = settings or get_settings()
        _, sups = self.per_n_sup()
        positive = sups[sups > 0.0]
        if positive.size < 2:
            return False
        return bool(sups[-1] > settings.bounded_factor * float(np.median(positive)))

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.ratios)))

    def write_csv(self, path: Path) -> None:
        header = ["n", "a_n", "s", "x", "lhs", "rhs", "ratio", "window_error"]
        write_rows(path, header, [[r[k] for k in header] for r in self.rows])

    def summary(self, settings: Settings | None = None) -> dict:
        ns, sups = self.per_n_sup()
        return {
            "c": self.c,
            "sup_ratio": self.sup_ratio,
            "finite": self.finite,
            "trending_up": self.trending_up(settings),
            "per_n": {"n": ns.tolist(), "sup_ratio": sups.tolist()},
        }


def lld_bound_check(
    base: LatticeDist,
    n_list,
    s_list,
    x_list,
    ell: RegVarFn | None = None,
    settings: Settings | None = None,
    window_log2: int | None = None,
    progress: Progress | None = None,
) -> LLDTable:
    """
    Exact local large deviation table.

    s_list and x_list are multiples of a_n. The left side comes from the
    window-cropped powers of the s-truncated law; c is the sup over every
    cut level used of 2 mu_1(s) ell(s)/s.
    """
    settings = settings or get_settings()
    ell = ell or default_ell(base)
    norming = NormingSeq(ell)
    ns = sorted({int(n) for n in n_list})
    if not ns or ns[0] < 1:
        raise ValidationFailure("n_list", "powers must be at least 1")
    s_mult = [float(s) for s in s_list]
    x_mult = [float(x) for x in x_list]
    if any(s <= 0.0 for s in s_mult) or any(x <= 0.0 for x in x_mult):
        raise ValidationFailure("s_list", "multiples of a_n must be positive")

    levels = {(n, sm): sm * norming(n) for n in ns for sm in s_mult}
    c = max(2.0 * truncated_moment(base, 1, s).value * float(ell(s)) / s for s in levels.values())
    logger.info("LLD constant c = %.6g over %d cut levels", c, len(levels))

    table = LLDTable(c=c)
    task_id = progress.add_task("LLD table", total=len(levels)) if progress else None
    for (n, sm), s in levels.items():
        a_n = norming(n)
        law = truncate(base, s)
        right = int(math.ceil(max(x_mult) * a_n / base.h)) + 3
        w_lo, w_hi = window_bounds(law, right, settings, window_log2 if window_log2 is not None else 4)
        power = ConvPowerSet(law, w_lo, w_hi, settings).conv_power(n)
        for xm in x_mult:
            x = xm * a_n
            lhs = float(power.at(_cell(base, x, n)))
            rhs = (1.0 / s + 1.0 / a_n) * math.exp(-x / s + c * n / float(ell(s)))
            table.rows.append(
                {
                    "n": n,
                    "a_n": a_n,
                    "s": s,
                    "x": x,
                    "lhs": lhs,
                    "rhs": rhs,
                    "ratio": lhs / rhs if rhs > 0.0 else math.inf,
                    "window_error": power.error,
                }
            )
        if progress and task_id is not None:
            progress.advance(task_id)
    return table


# ----------------------------------------------------------------------
# The R functional and its relaxation
# ----------------------------------------------------------------------


def n_blocks(n_lo: int, n_hi: int, max_reps: int = _MAX_N_REPS) -> tuple[np.ndarray, np.ndarray]:
    """
    Representatives and weights covering n_lo..n_hi.

    Short ranges are listed in full; longer ones are cut into geometric
    blocks represented by their geometric midpoint and weighted by size.
    """
    if n_hi < n_lo:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    count = n_hi - n_lo + 1
    if count <= max_reps:
        return np.arange(n_lo, n_hi + 1, dtype=np.int64), np.ones(count)
    edges = np.unique(np.round(np.geomspace(n_lo, n_hi + 1, max_reps + 1)).astype(np.int64))
    edges[0], edges[-1] = n_lo, n_hi + 1
    starts, stops = edges[:-1], edges[1:]
    keep = stops > starts
    starts, stops = starts[keep], stops[keep]
    reps = np.round(np.sqrt(starts * (stops - 1.0))).astype(np.int64)
    reps = np.clip(reps, starts, stops - 1)
    return reps, (stops - starts).astype(float)


def _norming_of(norming: NormingSeq, values: np.ndarray) -> np.ndarray:
    distinct, inverse = np.unique(values, return_inverse=True)
    return norming.array(distinct)[inverse]


def _z(settings: Settings) -> float:
    return float(norm.ppf(0.5 + settings.confidence / 2.0))


@dataclass
class RFunction:
    """Monte Carlo value of the R functional at one (x, delta)."""

    x: float
    delta: float
    value: float
    radius: float
    n_range: tuple[int, int]
    samples: int
    seed: int
    deterministic: bool
    capped: int = 0
    bucketed: bool = False
    per_n: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "x": self.x,
            "delta": self.delta,
            "value": self.value,
            "radius": self.radius,
            "n_range": list(self.n_range),
            "samples": self.samples,
            "seed": self.seed,
            "deterministic": self.deterministic,
            "capped": self.capped,
            "bucketed": self.bucketed,
        }


def _walk_parts(
    base: LatticeDist,
    sampler: WalkSampler | None,
    n: int,
    x: float,
    rows: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """(N_n, x + S_n^-) for `rows` independent walks of length n."""
    p_plus = min(1.0, max(0.0, base.p_plus / base.total_mass))
    if sampler is None:
        return np.full(rows, n, dtype=np.int64), np.full(rows, x)
    positive = rng.binomial(n, p_plus, size=rows).astype(np.int64)
    counts = n - positive
    x_n = np.empty(rows)
    start = 0
    per_row = max(1, n)
    step = max(1, _MAX_ROW_DRAWS // per_row)
    while start < rows:
        stop = min(rows, start + step)
        block = counts[start:stop]
        draws = sampler.draw_positions(rng, int(block.sum()))
        x_n[start:stop] = x - sum_groups(draws, block)
        start = stop
    return positive, x_n


def r_function(
    base: LatticeDist,
    ell: RegVarFn,
    T: float,
    eta: float,
    r: float,
    c1: float,
    c2: float,
    L: RegVarFn,
    delta: float,
    x: float,
    mc_samples: int | None = None,
    seed: int = 0,
    settings: Settings | None = None,
    threads: int | None = None,
    progress: Progress | None = None,
) -> RFunction:
    """
    (x/ell(x)) sum_{L(x) <= n < ell(delta x)} E[(N_n/a_{N_n}) (F̄(x_n)/x_n) sup_t Î_{eta,N_n,r}(t, T)].

    Here N_n counts positive steps, x_n = x + S_n^- and t runs over a
    geometric grid in [c1 x_n/kappa, c2 x_n + 2h]. Î is tabulated once per
    distinct N while there are at most 64 of them; beyond that, once per
    geometric bucket of N at the bucket's largest member, which can only
    raise the estimate (flagged as bucketed). A one-sided law makes the
    expectation deterministic.
    """
    settings = settings or get_settings()
    threads = threads or settings.threads
    samples = settings.mc_samples if mc_samples is None else int(mc_samples)
    if not 0.0 < eta < 1.0:
        raise ValidationFailure("eta", "eta must lie in (0, 1)")
    if not 0.0 < r <= 1.0:
        raise ValidationFailure("r", "r must lie in (0, 1]")
    if not 0.5 <= c1 < 1.0 <= c2:
        raise ValidationFailure("c1", "need 1/2 <= c1 < 1 <= c2")
    if not 0.0 < delta < 1.0:
        raise ValidationFailure("delta", "delta must lie in (0, 1)")
    if T < 0.0:
        raise ValidationFailure("T", "threshold must be nonnegative")
    if x <= 0.0:
        raise ValidationFailure("x", "x must be positive")

    kappa = _kappa(ell.alpha)
    norming = NormingSeq(ell)
    n_lo = max(1, int(math.ceil(snap_integers(float(L(x))))))
    n_hi = int(math.ceil(snap_integers(float(ell(delta * x))))) - 1
    reps, weights = n_blocks(n_lo, n_hi)
    p_plus = min(1.0, max(0.0, base.p_plus / base.total_mass))
    deterministic = p_plus >= 1.0 - 1e-15
    result = RFunction(
        x=x, delta=delta, value=0.0, radius=0.0, n_range=(n_lo, n_hi),
        samples=0, seed=seed, deterministic=deterministic,
    )
    if reps.size == 0 or p_plus <= 0.0:
        return result

    sampler = None if deterministic else WalkSampler(base, side="nonpositive")
    per_n_samples = 1 if deterministic else max(1, samples // reps.size)

    draws: list[tuple[np.ndarray, np.ndarray]] = []
    task_id = progress.add_task("R functional", total=int(reps.size)) if progress else None
    for index, n in enumerate(reps):
        n = int(n)
        if deterministic:
            draws.append(_walk_parts(base, None, n, x, 1, np.random.default_rng(0)))
        else:
            plan = ChunkPlan(per_n_samples, settings.chunk_size, stream_id=index)
            parts = run_chunks(
                plan,
                seed,
                lambda rng, chunk, n=n: _walk_parts(base, sampler, n, x, chunk.size, rng),
                threads=threads,
            )
            draws.append((np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])))
        if progress and task_id is not None:
            progress.advance(task_id)

    all_n = np.concatenate([d[0] for d in draws])
    all_x = np.concatenate([d[1] for d in draws])
    # walks whose x_n runs past 64x see the grid only up to the cap
    x_top = min(float(all_x.max()), 64.0 * x)
    capped = int(np.count_nonzero(all_x > x_top))
    if capped:
        logger.warning("%d of %d walks reach past the t-grid cap at %g", capped, all_x.size, x_top)
    t_lo = c1 * x / kappa
    t_hi = c2 * x_top + 2.0 * base.h
    ratio = min(2.0 ** (1.0 / 8.0), (c2 * kappa / c1) ** (1.0 / 63.0))
    count = int(math.ceil(math.log(t_hi / t_lo) / math.log(ratio))) + 1
    t_grid = t_lo * ratio ** np.arange(count)
    cells = ExcessCells(base, T, (1.0 - eta) * t_lo, float(t_grid[-1]))

    # one table per distinct N, or geometric buckets of N tabulated at their top member
    positive_n = all_n[all_n > 0]
    bucket_of: dict[int, int] = {}
    tops: list[int] = []
    distinct = np.unique(positive_n)
    result.bucketed = distinct.size > _EXACT_N_TABLES
    edge = 0
    for value in distinct:
        value = int(value)
        if not result.bucketed:
            tops.append(value)
        elif not tops or value > edge:
            edge = max(value, int(math.floor(value * 2.0 ** (1.0 / 8.0))))
            tops.append(edge)
        bucket_of[value] = len(tops) - 1
    table = np.zeros((len(tops), count))
    if cells.left.size:
        for b, top in enumerate(tops):
            table[b] = cells.windows(t_grid, eta, r * norming(top))
    running = np.zeros((len(tops), count, count))
    for i in range(count):
        running[:, i, i:] = np.maximum.accumulate(table[:, i:], axis=1)

    z = _z(settings)
    total, variance = 0.0, 0.0
    for n, weight, (big_n, x_n) in zip(reps, weights, draws):
        terms = np.zeros(big_n.size)
        live = big_n > 0
        if np.any(live) and len(tops):
            i0 = np.searchsorted(t_grid, c1 * x_n[live] / kappa, side="left")
            i1 = np.searchsorted(t_grid, c2 * x_n[live] + 2.0 * base.h, side="right") - 1
            i0 = np.minimum(i0, count - 1)
            i1 = np.maximum(i1, i0)
            buckets = np.array([bucket_of[int(v)] for v in big_n[live]], dtype=np.int64)
            sup = running[buckets, i0, i1]
            a_big = _norming_of(norming, big_n[live])
            fbar = np.asarray(base.tail(x_n[live]), dtype=float)
            terms[live] = big_n[live] / a_big * fbar / x_n[live] * sup
        mean = float(terms.mean())
        sem = float(terms.std(ddof=1) / math.sqrt(terms.size)) if terms.size > 1 else 0.0
        total += weight * mean
        variance += (weight * sem) ** 2
        result.per_n.append({"n": int(n), "weight": float(weight), "mean": mean, "sem": sem, "samples": int(terms.size)})

    scale = x / float(ell(x))
    result.value = scale * total
    result.radius = scale * z * math.sqrt(variance)
    result.samples = int(sum(d[0].size for d in draws))
    result.capped = capped
    logger.info("R(x=%g, delta=%g) = %.6g ± %.2g", x, delta, result.value, result.radius)
    return result


@dataclass
class RelaxedBound:
    """The relaxation of R by a sup of I_eta(t,T)/(t ell(t)) and a Karamata integral."""

    x: float
    delta: float
    value: float
    sup_ratio: float
    t_star: float
    integral: float
    lower_limit: float

    def summary(self) -> dict:
        return dict(self.__dict__)


def r_relaxed(
    base: LatticeDist,
    ell: RegVarFn,
    T: float,
    eta: float,
    L: RegVarFn,
    delta: float,
    x: float,
    c1: float,
) -> RelaxedBound:
    """
    (x/ell(x)) sup_{c1 x/kappa <= t <= 64x} I_eta(t,T)/(t ell(t)) * int_{ell^-(L(x))}^{delta x} (ell(s)/s)^2 ds.

    The sup runs over a geometric grid of ratio 2^{1/8}; I_eta is exact per cell.
    """
    if not 0.0 < eta < 1.0:
        raise ValidationFailure("eta", "eta must lie in (0, 1)")
    if not 0.0 < delta < 1.0:
        raise ValidationFailure("delta", "delta must lie in (0, 1)")
    kappa = _kappa(ell.alpha)
    t_lo = c1 * x / kappa
    t_hi = 64.0 * x
    count = int(math.ceil(math.log(t_hi / t_lo) / math.log(2.0 ** (1.0 / 8.0)))) + 1
    t = np.geomspace(t_lo, t_hi, count)
    profile = OverflowProfile(base, T, (1.0 - eta) * t_lo, t_hi)
    ratios = profile.overflow(t, eta) / (t * np.asarray(ell(t), dtype=float))
    k = int(np.argmax(ratios))
    lower = max(1.0, ell.invert(float(L(x))))
    upper = delta * x
    integral = karamata_u(ell, upper) - karamata_u(ell, lower) if upper > lower else 0.0
    value = x / float(ell(x)) * float(ratios[k]) * integral
    return RelaxedBound(
        x=x,
        delta=delta,
        value=value,
        sup_ratio=float(ratios[k]),
        t_star=float(t[k]),
        integral=integral,
        lower_limit=lower,
    )


@dataclass(frozen=True)
class LambdaCheck:
    """Sum of E(N_n/a_{N_n}) against sum n/a_n and its Karamata integral."""

    n_lo: int
    n_hi: int
    exact_sum: float
    integral: float
    mc_sum: float
    mc_radius: float

    @property
    def ratio(self) -> float:
        return self.mc_sum / self.integral if self.integral > 0.0 else math.nan

    def summary(self) -> dict:
        return {**self.__dict__, "ratio": self.ratio}


def lambda_check(
    base: LatticeDist,
    ell: RegVarFn,
    n_lo: int,
    n_hi: int,
    samples: int,
    seed: int,
    settings: Settings | None = None,
) -> LambdaCheck:
    """sum n/a_n is compared with alpha (u(a_{n_hi}) - u(a_{n_lo})) and with the Monte Carlo sum of E(N_n/a_{N_n})."""
    settings = settings or get_settings()
    if not 1 <= n_lo <= n_hi:
        raise ValidationFailure("n_lo", "need 1 <= n_lo <= n_hi")
    norming = NormingSeq(ell)
    ns = np.arange(n_lo, n_hi + 1)
    exact = float(np.sum(ns / norming.array(ns)))
    integral = ell.alpha * (karamata_u(ell, norming(n_hi)) - karamata_u(ell, max(norming(n_lo), 1.0)))
    p_plus = min(1.0, max(0.0, base.p_plus / base.total_mass))
    reps, weights = n_blocks(n_lo, n_hi)
    per_n = max(2, samples // reps.size)
    total, variance = 0.0, 0.0
    for index, (n, weight) in enumerate(zip(reps, weights)):
        plan = ChunkPlan(per_n, settings.chunk_size, stream_id=index)
        parts = run_chunks(plan, seed, lambda rng, chunk, n=int(n): rng.binomial(n, p_plus, size=chunk.size))
        big_n = np.concatenate(parts)
        values = np.where(big_n > 0, big_n / _norming_of(norming, np.maximum(big_n, 1)), 0.0)
        total += weight * float(values.mean())
        variance += (weight * float(values.std(ddof=1)) / math.sqrt(values.size)) ** 2
    return LambdaCheck(
        n_lo=n_lo,
        n_hi=n_hi,
        exact_sum=exact,
        integral=integral,
        mc_sum=total,
        mc_radius=_z(settings) * math.sqrt(variance),
    )


# ----------------------------------------------------------------------
# Event probes
# ----------------------------------------------------------------------


@dataclass
class EventProbe:
    """Monte Carlo probabilities of the large-jump events at one (n, k, x)."""

    n: int
    k: int
    x: float
    eps: float
    gamma: float
    zeta: float
    samples: int
    seed: int
    p_event: float = 0.0
    p_gamma: float = 0.0
    p_small: float = 0.0
    p_cell: float = 0.0
    radius_event: float = 0.0
    radius_gamma: float = 0.0
    radius_small: float = 0.0
    radius_cell: float = 0.0
    cell_exact: float | None = None
    event_exact: float | None = None

    @property
    def ordering_ratio(self) -> float:
        """P(E)/(C(n,k) P(Gamma)); exchangeability makes it 1."""
        denom = float(comb(self.n, self.k, exact=True)) * self.p_gamma
        return self.p_event / denom if denom > 0.0 else math.nan

    def summary(self) -> dict:
        return {**self.__dict__, "ordering_ratio": self.ordering_ratio}


def _wilson_radius(hits: int, count: int, confidence: float) -> float:
    if count <= 0:
        return 0.0
    ci = binomtest(int(hits), int(count)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.high - ci.low) / 2.0


def event_probe(
    base: LatticeDist,
    n: int,
    k: int,
    x: float,
    eps: float,
    gamma: float | None,
    samples: int,
    seed: int,
    ell: RegVarFn | None = None,
    exact: bool = False,
    settings: Settings | None = None,
    threads: int | None = None,
    window_log2: int | None = None,
) -> EventProbe:
    """
    Estimate P(E), P(Gamma) and P(E, S_{n:k} <= (1-eps)x).

    E: S_n in x+I with exactly k steps above zeta = a_n^{1-gamma} x^gamma.
    Gamma: E with the k large steps being the first k. S_{n:k} is the sum of
    the k largest steps. P(S_n in x+I) is estimated alongside, and with
    exact=True it and (for k = 0) P(E) are computed by exact convolution.
    gamma=None takes the midpoint of the admissible range (1/(alpha(kappa+1)), 1).
    """
    settings = settings or get_settings()
    threads = threads or settings.threads
    ell = ell or default_ell(base)
    alpha = ell.alpha
    kappa = _kappa(alpha)
    if n < 1:
        raise ValidationFailure("n", "n must be at least 1")
    gamma_lo = 1.0 / (alpha * (kappa + 1))
    if gamma is None:
        gamma = 0.5 * (gamma_lo + 1.0)
    if not gamma_lo < gamma < 1.0:
        raise ValidationFailure("gamma", f"gamma must lie in ({gamma_lo:.6g}, 1)")
    if not 0 <= k <= kappa + 1:
        raise ValidationFailure("k", f"k must lie in [0, {kappa + 1}]")
    if not 0.0 < eps < 1.0:
        raise ValidationFailure("eps", "eps must lie in (0, 1)")
    if samples < 1:
        raise ValidationFailure("samples", "need at least one sample")
    a_n = NormingSeq(ell)(n)
    zeta = a_n ** (1.0 - gamma) * x**gamma
    probe = EventProbe(n=n, k=k, x=x, eps=eps, gamma=gamma, zeta=zeta, samples=samples, seed=seed)
    if k > n:
        return probe

    sampler = WalkSampler(base)
    target = _cell(base, x, n)

    def work(rng: np.random.Generator, chunk) -> np.ndarray:
        counts = np.zeros(4, dtype=np.int64)
        step = max(1, _MAX_ROW_DRAWS // n)
        done = 0
        while done < chunk.size:
            rows = min(step, chunk.size - done)
            idx = sampler.draw(rng, rows * n).reshape(rows, n)
            positions = base.a + base.h * idx.astype(float)
            in_cell = idx.sum(axis=1) == target
            large = positions > zeta
            event = in_cell & (large.sum(axis=1) == k)
            first = large[:, :k].all(axis=1) if k else np.ones(rows, dtype=bool)
            if k:
                top = -np.partition(-positions, k - 1, axis=1)[:, :k]
                small = top.sum(axis=1) <= (1.0 - eps) * x
            else:
                small = np.ones(rows, dtype=bool)
            counts += [
                int(np.count_nonzero(event)),
                int(np.count_nonzero(event & first)),
                int(np.count_nonzero(event & small)),
                int(np.count_nonzero(in_cell)),
            ]
            done += rows
        return counts

    plan = ChunkPlan(samples, settings.chunk_size)
    counts = np.sum(run_chunks(plan, seed, work, threads=threads), axis=0)
    conf = settings.confidence
    probe.p_event, probe.p_gamma, probe.p_small, probe.p_cell = (float(c) / samples for c in counts)
    probe.radius_event = _wilson_radius(counts[0], samples, conf)
    probe.radius_gamma = _wilson_radius(counts[1], samples, conf)
    probe.radius_small = _wilson_radius(counts[2], samples, conf)
    probe.radius_cell = _wilson_radius(counts[3], samples, conf)

    if exact:
        right = int(math.ceil(x / base.h)) + 3
        w_lo, w_hi = window_bounds(base, right, settings, window_log2 if window_log2 is not None else 4)
        probe.cell_exact = float(ConvPowerSet(base, w_lo, w_hi, settings).conv_power(n).at(target))
        if k == 0:
            law = truncate(base, zeta)
            w_lo, w_hi = window_bounds(law, right, settings, window_log2 if window_log2 is not None else 4)
            probe.event_exact = float(ConvPowerSet(law, w_lo, w_hi, settings).conv_power(n).at(target))
    return probe


def write_probes(path: Path, probes: list[EventProbe]) -> None:
    header = [
        "n", "k", "x", "zeta", "samples", "p_event", "radius_event", "p_gamma",
        "radius_gamma", "p_small", "radius_small", "p_cell", "radius_cell",
    ]
    write_rows(path, header, [[getattr(p, name) for name in header] for p in probes])


def write_r_table(path: Path, values: list[RFunction], relaxed: list[RelaxedBound]) -> None:
    write_table(
        path,
        ["x", "delta", "R", "radius", "bucketed", "relaxed"],
        [
            [v.x for v in values],
            [v.delta for v in values],
            [v.value for v in values],
            [v.radius for v in values],
            [v.bucketed for v in values],
            [b.value for b in relaxed],
        ],
    )
