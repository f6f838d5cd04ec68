"""Ladder processes by simulation, Wiener-Hopf checks and compound Poisson walks."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from rich.progress import Progress
from scipy.stats import poisson

from .artifacts import write_table
from .chunking import ChunkPlan, chunk_generator, run_chunks
from .config import Settings, get_settings
from .convolution import ConvPowerSet, fft_convolve, naive_power
from .distributions.base import LatticeDist
from .engine import default_ell
from .errors import NotApplicable, ValidationFailure
from .regvar import RegVarFn, snap_integers
from .sampling import WalkSampler, binomial_sigma, sum_groups
from .stable import StableLimit, ladder_srt_constant, limit_for, stable_limit
from .trend import TrendVerdict, bounded_verdict, decay_verdict

logger = logging.getLogger(__name__)

_MAX_BATCH_STEPS = 1 << 22
_INDEX_SLACK = 1e-9
_UNRELIABLE_CENSORING = 0.5
# Poisson weights below this are dropped from compound mixtures
_POISSON_CUTOFF = 1e-16


def _require_lattice_origin(base: LatticeDist) -> None:
    if base.a != 0.0:
        raise ValidationFailure("a", "ladder work needs a lattice through the origin (a = 0)")


# ----------------------------------------------------------------------
# Ladder sampling
# ----------------------------------------------------------------------


@dataclass
class LadderSample:
    """
    Ladder statistics of `paths` simulated walks of `step_cap` steps.

    Heights and levels are lattice indices (position = h * index). Per path
    the first m strict ascending heights H_k and weak descending levels
    -S at weak descending epochs are kept, -1 marking a missing entry.
    Histograms and renewal counts run over indices 0..bins-1.
    """

    paths: int
    step_cap: int
    m: int
    h: float
    bins: int
    t_grid: np.ndarray
    asc_heights: np.ndarray
    asc_epochs: np.ndarray
    desc_levels: np.ndarray
    desc_epochs: np.ndarray
    asc_count: np.ndarray
    first_heights: np.ndarray
    f_plus: np.ndarray
    f_minus: np.ndarray
    v_plus_sum: np.ndarray
    v_plus_sumsq: np.ndarray
    v_minus_sum: np.ndarray
    v_minus_sumsq: np.ndarray
    wh_sum: np.ndarray
    wh_sumsq: np.ndarray
    wh_hits: np.ndarray
    mirror_sum: np.ndarray
    mirror_sumsq: np.ndarray
    mirror_hits: np.ndarray
    overflow: dict[str, int] = field(default_factory=dict)
    positive_sum: float = 0.0
    positive_sumsq: float = 0.0
    argmax_sum: float = 0.0
    argmax_sumsq: float = 0.0
    end_positive: int = 0
    clipped: int = 0
    seed: int = 0

    @property
    def censored(self) -> np.ndarray:
        """Paths without a strict ascending ladder epoch within the cap."""
        return self.asc_count == 0

    @property
    def completed(self) -> int:
        return int(np.count_nonzero(self.asc_count > 0))

    @property
    def censoring_fraction(self) -> float:
        """Share of paths with fewer than m ascending epochs."""
        return float(np.count_nonzero(self.asc_count < self.m)) / max(self.paths, 1)

    @property
    def reliable(self) -> bool:
        return self.censoring_fraction <= _UNRELIABLE_CENSORING

    def _mean_se(self, total: np.ndarray, squares: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean = total / self.paths
        var = np.maximum(squares / self.paths - mean**2, 0.0)
        return mean, np.sqrt(var / max(self.paths - 1, 1))

    @property
    def v_plus(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean count of strict ascending epochs k <= cap-1 (k = 0 included) per level, with its standard error."""
        return self._mean_se(self.v_plus_sum, self.v_plus_sumsq)

    @property
    def v_minus(self) -> tuple[np.ndarray, np.ndarray]:
        return self._mean_se(self.v_minus_sum, self.v_minus_sumsq)

    @property
    def f_plus_hat(self) -> np.ndarray:
        """P(H_1 = t, first ascending epoch <= cap)."""
        return self.f_plus / self.paths

    @property
    def f_minus_hat(self) -> np.ndarray:
        return self.f_minus / self.paths

    def sparre_andersen(self) -> dict:
        """
        E #{1 <= k <= n: S_k > 0} against E[index of the first maximum of S_0..S_n], n = cap.

        Both sides are means over the same paths; they agree in expectation.
        """
        p = self.paths
        mean_pos = self.positive_sum / p
        mean_arg = self.argmax_sum / p
        var_pos = max(self.positive_sumsq / p - mean_pos**2, 0.0)
        var_arg = max(self.argmax_sumsq / p - mean_arg**2, 0.0)
        sigma = math.sqrt((var_pos + var_arg) / max(p - 1, 1))
        return {
            "positive_steps": mean_pos,
            "first_max_index": mean_arg,
            "sigma": sigma,
            "z": (mean_pos - mean_arg) / sigma if sigma > 0.0 else 0.0,
        }

    def write_csv(self, path: Path) -> None:
        v_plus, v_plus_se = self.v_plus
        v_minus, v_minus_se = self.v_minus
        write_table(
            path,
            ["y", "F_plus", "F_minus", "V_plus", "V_plus_se", "V_minus", "V_minus_se"],
            [
                self.h * np.arange(self.bins),
                self.f_plus_hat,
                self.f_minus_hat,
                v_plus,
                v_plus_se,
                v_minus,
                v_minus_se,
            ],
        )

    def summary(self) -> dict:
        return {
            "paths": self.paths,
            "step_cap": self.step_cap,
            "m": self.m,
            "completed": self.completed,
            "censored": int(np.count_nonzero(self.censored)),
            "censoring_fraction": self.censoring_fraction,
            "reliable": self.reliable,
            "overflow": self.overflow,
            "P(S_cap > 0)": self.end_positive / self.paths,
            "sparre_andersen": self.sparre_andersen(),
            "clipped_draws": self.clipped,
            "seed": self.seed,
        }


def _first_m(flags: np.ndarray, values: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """First m flagged values per row and their epochs (column + 1), -1 padded, and the flag counts."""
    rows = flags.shape[0]
    row_i, col = np.nonzero(flags)
    starts = np.searchsorted(row_i, np.arange(rows))
    rank = np.arange(row_i.size) - starts[row_i]
    keep = rank < m
    out = np.full((rows, m), -1, dtype=np.int64)
    epochs = np.full((rows, m), -1, dtype=np.int64)
    out[row_i[keep], rank[keep]] = values[row_i[keep], col[keep]]
    epochs[row_i[keep], rank[keep]] = col[keep] + 1
    return out, epochs, np.bincount(row_i, minlength=rows)


def _visit_moments(rows: int, row_i: np.ndarray, levels: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Per-level sums of per-path visit counts and of their squares; the origin visit of every path is added."""
    row_all = np.concatenate([row_i, np.arange(rows)])
    level_all = np.concatenate([levels, np.zeros(rows, dtype=np.int64)])
    inside = level_all < bins
    key = row_all[inside] * bins + level_all[inside]
    distinct, counts = np.unique(key, return_counts=True)
    cell = distinct % bins
    counts = counts.astype(float)
    total = np.bincount(cell, weights=counts, minlength=bins)
    squares = np.bincount(cell, weights=counts**2, minlength=bins)
    return total, squares, int(np.count_nonzero(~inside))


def _empty_partial(m: int, t_count: int, bins: int) -> dict:
    return {
        "asc_heights": [],
        "asc_epochs": [],
        "desc_levels": [],
        "desc_epochs": [],
        "asc_count": [],
        "first_heights": [],
        "f_plus": np.zeros(bins),
        "f_minus": np.zeros(bins),
        "v_plus_sum": np.zeros(bins),
        "v_plus_sumsq": np.zeros(bins),
        "v_minus_sum": np.zeros(bins),
        "v_minus_sumsq": np.zeros(bins),
        "wh_sum": np.zeros(t_count),
        "wh_sumsq": np.zeros(t_count),
        "wh_hits": np.zeros(t_count),
        "mirror_sum": np.zeros(t_count),
        "mirror_sumsq": np.zeros(t_count),
        "mirror_hits": np.zeros(t_count),
        "overflow": {"f_plus": 0, "f_minus": 0, "v_plus": 0, "v_minus": 0},
        "positive_sum": 0.0,
        "positive_sumsq": 0.0,
        "argmax_sum": 0.0,
        "argmax_sumsq": 0.0,
        "end_positive": 0,
    }


def _accumulate(part: dict, base: LatticeDist, walk: np.ndarray, m: int, t_grid: np.ndarray, bins: int) -> None:
    rows, cap = walk.shape
    origin = np.zeros((rows, 1), dtype=np.int64)
    before = np.concatenate([origin, walk[:, :-1]], axis=1)
    ascending = walk > np.maximum.accumulate(before, axis=1)
    descending = walk <= np.minimum.accumulate(before, axis=1)

    heights, epochs, counts = _first_m(ascending, walk, m)
    levels, d_epochs, _ = _first_m(descending, -walk, m)
    part["asc_heights"].append(heights)
    part["asc_epochs"].append(epochs)
    part["desc_levels"].append(levels)
    part["desc_epochs"].append(d_epochs)
    part["asc_count"].append(counts)

    has_asc = counts > 0
    first = heights[:, 0]
    part["first_heights"].append(first[has_asc])
    inside = has_asc & (first < bins)
    part["f_plus"] += np.bincount(first[inside], minlength=bins)
    part["overflow"]["f_plus"] += int(np.count_nonzero(has_asc & ~inside))
    has_desc = levels[:, 0] >= 0
    first_level = levels[:, 0]
    inside = has_desc & (first_level < bins)
    part["f_minus"] += np.bincount(first_level[inside], minlength=bins)
    part["overflow"]["f_minus"] += int(np.count_nonzero(has_desc & ~inside))

    # renewal counts over epochs k <= cap - 1
    a_rows, a_cols = np.nonzero(ascending[:, :-1])
    a_levels = walk[a_rows, a_cols]
    d_rows, d_cols = np.nonzero(descending[:, :-1])
    d_levels = -walk[d_rows, d_cols]
    total, squares, over = _visit_moments(rows, a_rows, a_levels, bins)
    part["v_plus_sum"] += total
    part["v_plus_sumsq"] += squares
    part["overflow"]["v_plus"] += over
    total, squares, over = _visit_moments(rows, d_rows, d_levels, bins)
    part["v_minus_sum"] += total
    part["v_minus_sumsq"] += squares
    part["overflow"]["v_minus"] += over

    # Wiener-Hopf differences per path, origin epochs included
    d_rows_all = np.concatenate([d_rows, np.arange(rows)])
    d_levels_all = np.concatenate([d_levels, np.zeros(rows, dtype=np.int64)])
    a_rows_all = np.concatenate([a_rows, np.arange(rows)])
    a_levels_all = np.concatenate([a_levels, np.zeros(rows, dtype=np.int64)])
    for i, t in enumerate(t_grid):
        if t >= 1:
            hit = has_asc & (first == t)
            predicted = np.bincount(d_rows_all, weights=base.mass_index(d_levels_all + t), minlength=rows)
            diff = hit - predicted
            part["wh_sum"][i] += float(diff.sum())
            part["wh_sumsq"][i] += float(np.dot(diff, diff))
            part["wh_hits"][i] += int(np.count_nonzero(hit))
        hit = has_desc & (first_level == t)
        predicted = np.bincount(a_rows_all, weights=base.mass_index(-(a_levels_all + t)), minlength=rows)
        diff = hit - predicted
        part["mirror_sum"][i] += float(diff.sum())
        part["mirror_sumsq"][i] += float(np.dot(diff, diff))
        part["mirror_hits"][i] += int(np.count_nonzero(hit))

    positive = np.count_nonzero(walk > 0, axis=1).astype(float)
    first_max = np.argmax(np.concatenate([origin, walk], axis=1), axis=1).astype(float)
    part["positive_sum"] += float(positive.sum())
    part["positive_sumsq"] += float(np.dot(positive, positive))
    part["argmax_sum"] += float(first_max.sum())
    part["argmax_sumsq"] += float(np.dot(first_max, first_max))
    part["end_positive"] += int(np.count_nonzero(walk[:, -1] > 0))


def _merge(parts: list[dict]) -> dict:
    merged = parts[0]
    for part in parts[1:]:
        for key, value in part.items():
            if isinstance(value, list):
                merged[key].extend(value)
            elif isinstance(value, dict):
                for name, count in value.items():
                    merged[key][name] += count
            else:
                merged[key] = merged[key] + value
    return merged


def sample_ladder(
    base: LatticeDist,
    paths: int,
    step_cap: int | None = None,
    seed: int = 0,
    m: int = 4,
    t_grid=None,
    height_bins: int = 1 << 14,
    settings: Settings | None = None,
    progress: Progress | None = None,
    threads: int | None = None,
) -> LadderSample:
    """
    Simulate walks and collect their ladder statistics.

    Args:
        base: Step law on hZ (a = 0).
        paths: Number of walks.
        step_cap: Steps per walk (default from settings).
        seed: Root seed of the chunked streams.
        m: Ladder epochs kept per path.
        t_grid: Lattice indices t at which the Wiener-Hopf differences are accumulated.
        height_bins: Levels 0..height_bins-1 get histogram and renewal cells.
        settings: Settings override.
        progress: Optional progress display.
        threads: Worker threads.

    Returns:
        The merged LadderSample.
    """
    settings = settings or get_settings()
    _require_lattice_origin(base)
    step_cap = step_cap or settings.step_cap
    threads = threads or settings.threads
    if paths < 1:
        raise ValidationFailure("paths", "need at least one path")
    if step_cap < 2:
        raise ValidationFailure("step_cap", "need at least two steps per path")
    if m < 1:
        raise ValidationFailure("m", "keep at least one ladder epoch")
    if base.p_plus <= 0.0:
        raise ValidationFailure("base", "walk never steps up (p+ = 0)")
    t_grid = np.arange(1, 17, dtype=np.int64) if t_grid is None else np.asarray(t_grid, dtype=np.int64)
    if np.any(t_grid < 0):
        raise ValidationFailure("t_grid", "ladder offsets must be nonnegative")
    sampler = WalkSampler(base)
    rows_per_batch = max(1, _MAX_BATCH_STEPS // step_cap)

    def work(rng: np.random.Generator, chunk) -> dict:
        part = _empty_partial(m, t_grid.size, height_bins)
        done = 0
        while done < chunk.size:
            rows = min(rows_per_batch, chunk.size - done)
            steps = sampler.draw(rng, rows * step_cap).reshape(rows, step_cap)
            _accumulate(part, base, np.cumsum(steps, axis=1), m, t_grid, height_bins)
            done += rows
        return part

    plan = ChunkPlan(paths, settings.chunk_size)
    merged = _merge(run_chunks(plan, seed, work, threads=threads, progress=progress, description="Ladder paths"))
    stacked = {
        key: np.concatenate(merged[key]) if merged[key] else np.zeros((0, m), dtype=np.int64)
        for key in ("asc_heights", "asc_epochs", "desc_levels", "desc_epochs", "asc_count", "first_heights")
    }
    sample = LadderSample(
        paths=paths,
        step_cap=step_cap,
        m=m,
        h=base.h,
        bins=height_bins,
        t_grid=t_grid,
        **stacked,
        **{
            name: merged[name]
            for name in (
                "f_plus", "f_minus", "v_plus_sum", "v_plus_sumsq", "v_minus_sum", "v_minus_sumsq",
                "wh_sum", "wh_sumsq", "wh_hits", "mirror_sum", "mirror_sumsq", "mirror_hits", "overflow",
                "positive_sum", "positive_sumsq", "argmax_sum", "argmax_sumsq", "end_positive",
            )
        },
        clipped=sampler.clipped,
        seed=seed,
    )
    if not sample.reliable:
        logger.warning(
            "%.1f%% of paths have fewer than %d ascending epochs; ladder estimates are unreliable",
            100.0 * sample.censoring_fraction,
            m,
        )
    else:
        logger.info("ladder sample: %d paths, censoring %.3f", paths, sample.censoring_fraction)
    return sample


# ----------------------------------------------------------------------
# Wiener-Hopf residuals
# ----------------------------------------------------------------------


@dataclass
class WienerHopfTable:
    """Residuals F̂{t} - sum_y F{+-(y+t)} V̂{y} per t, for both identities."""

    t: np.ndarray
    observed: np.ndarray
    residual: np.ndarray
    sigma: np.ndarray
    flag: list[str]
    mirror_observed: np.ndarray
    mirror_residual: np.ndarray
    mirror_sigma: np.ndarray
    mirror_flag: list[str]

    @staticmethod
    def _z(residual: np.ndarray, sigma: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(sigma > 0.0, residual / sigma, 0.0)

    @property
    def z(self) -> np.ndarray:
        return self._z(self.residual, self.sigma)

    @property
    def mirror_z(self) -> np.ndarray:
        return self._z(self.mirror_residual, self.mirror_sigma)

    def within(self, k: float = 3.0, mirror: bool = False) -> float:
        """Share of usable grid points with |residual| <= k sigma."""
        z, flags = (self.mirror_z, self.mirror_flag) if mirror else (self.z, self.flag)
        usable = np.array([f != "insufficient" for f in flags])
        if not np.any(usable):
            return math.nan
        return float(np.mean(np.abs(z[usable]) <= k))

    def write_csv(self, path: Path) -> None:
        write_table(
            path,
            ["t", "F_plus_hat", "residual", "sigma", "z", "flag",
             "F_minus_hat", "mirror_residual", "mirror_sigma", "mirror_z", "mirror_flag"],
            [self.t, self.observed, self.residual, self.sigma, self.z, self.flag,
             self.mirror_observed, self.mirror_residual, self.mirror_sigma, self.mirror_z, self.mirror_flag],
        )

    def summary(self) -> dict:
        return {"within_3_sigma": self.within(), "mirror_within_3_sigma": self.within(mirror=True)}


def wiener_hopf_residual(base: LatticeDist, ladder: LadderSample, t_grid=None) -> WienerHopfTable:
    """
    Residuals of F_+{t} = sum_{y >= 0} F{y+t} V_-{y} and its mirror
    F_-{t} = sum_{y >= 0} F{-y-t} V_+{y}.

    The per-path differences were accumulated while sampling, so sigma is
    the standard error of their mean. A grid point with fewer than five
    observed hits or zero spread is flagged insufficient.
    """
    grid = ladder.t_grid if t_grid is None else np.asarray(t_grid, dtype=np.int64)
    positions = {int(t): i for i, t in enumerate(ladder.t_grid)}
    missing = [int(t) for t in grid if int(t) not in positions]
    if missing:
        raise ValidationFailure("t_grid", f"offsets {missing} were not accumulated while sampling")
    index = np.array([positions[int(t)] for t in grid], dtype=np.int64)
    p = ladder.paths

    def side(total, squares, hits, hist) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[str]]:
        mean = total[index] / p
        var = np.maximum(squares[index] / p - mean**2, 0.0)
        sigma = np.sqrt(var / max(p - 1, 1))
        observed = np.array([hist[t] / p if t < ladder.bins else math.nan for t in grid])
        flags = []
        for j in range(grid.size):
            if hits[index[j]] < 5 or sigma[j] == 0.0:
                flags.append("insufficient")
            else:
                flags.append("ok" if abs(mean[j]) <= 3.0 * sigma[j] else "exceeds")
        return observed, mean, sigma, flags

    observed, residual, sigma, flags = side(ladder.wh_sum, ladder.wh_sumsq, ladder.wh_hits, ladder.f_plus)
    for j, t in enumerate(grid):
        if t < 1:
            flags[j] = "insufficient"
    m_obs, m_res, m_sigma, m_flags = side(ladder.mirror_sum, ladder.mirror_sumsq, ladder.mirror_hits, ladder.f_minus)
    return WienerHopfTable(
        t=grid.astype(float) * base.h,
        observed=observed,
        residual=residual,
        sigma=sigma,
        flag=flags,
        mirror_observed=m_obs,
        mirror_residual=m_res,
        mirror_sigma=m_sigma,
        mirror_flag=m_flags,
    )


# ----------------------------------------------------------------------
# Ladder SRT
# ----------------------------------------------------------------------


def fit_ell_plus(ladder: LadderSample, exponent: float) -> RegVarFn:
    """ell_+ = C x^exponent with C matched at the 90th percentile of the observed heights."""
    heights = ladder.first_heights
    if heights.size == 0:
        raise ValidationFailure("ladder", "no completed ladder epochs to fit")
    q90 = max(float(np.quantile(heights, 0.9)) * ladder.h, ladder.h)
    survival = float(np.count_nonzero(heights * ladder.h > q90)) / heights.size
    survival = survival if survival > 0.0 else 0.1
    return RegVarFn(alpha=exponent, scale=1.0 / (survival * q90**exponent))


@dataclass
class LadderSRT:
    """x F̄_+(x) V_+(x+I] against h sin(pi alpha varrho)/pi, with the V_- scan."""

    x: np.ndarray
    fbar: np.ndarray
    v_plus: np.ndarray
    product: np.ndarray
    band: np.ndarray
    constant: float
    within_fraction: float
    v_minus_ratio: np.ndarray
    v_minus_sup: float
    v_minus_trend: TrendVerdict
    trend: TrendVerdict
    fit_based: bool
    censoring_fraction: float

    def write_csv(self, path: Path) -> None:
        write_table(
            path,
            ["x", "Fbar_plus", "V_plus", "xFbarV", "band", "V_minus_ratio"],
            [self.x, self.fbar, self.v_plus, self.product, self.band, self.v_minus_ratio],
        )

    def summary(self) -> dict:
        return {
            "constant": self.constant,
            "within_3_band": self.within_fraction,
            "v_minus_sup": self.v_minus_sup,
            "v_minus_trend": self.v_minus_trend.to_dict(),
            "trend": self.trend.to_dict(),
            "ell_plus_fit_based": self.fit_based,
            "censoring_fraction": self.censoring_fraction,
        }


def ladder_srt_check(
    base: LatticeDist,
    ladder: LadderSample,
    x_grid,
    ell: RegVarFn | None = None,
    ell_plus: RegVarFn | None = None,
    settings: Settings | None = None,
) -> LadderSRT:
    """
    Evaluate x F̄_+(x) V̂_+(x+I] with delta-method bands.

    F̄_+ is the survival of the first ladder height among completed paths.
    Also scans V̂_-(x) ell_+(x)/ell(x), V̂_-(x) being the cumulative weak
    descending renewal function; without ell_+ a power fit is used and the
    result is marked fit-based.
    """
    settings = settings or get_settings()
    ell = ell or default_ell(base)
    varrho = limit_for(base).varrho
    product_exponent = ell.alpha * varrho
    if product_exponent > 0.5 + 1e-12:
        raise NotApplicable(f"alpha*varrho = {product_exponent:.6g} exceeds 1/2")
    constant = ladder_srt_constant(ell.alpha, varrho, base.h)
    x = np.sort(np.asarray(x_grid, dtype=float))
    if x.size == 0 or x[0] <= 0.0:
        raise ValidationFailure("x_grid", "scan points must be positive")
    j = np.floor(x / base.h + _INDEX_SLACK).astype(np.int64)

    heights = np.sort(ladder.first_heights)
    completed = max(heights.size, 1)
    fbar = (heights.size - np.searchsorted(heights, j, side="right")) / completed
    fbar_se = np.sqrt(np.maximum(fbar * (1.0 - fbar), 0.0) / completed)
    v_mean, v_se = ladder.v_plus
    cell = j + 1
    inside = cell < ladder.bins
    v = np.where(inside, v_mean[np.minimum(cell, ladder.bins - 1)], math.nan)
    v_err = np.where(inside, v_se[np.minimum(cell, ladder.bins - 1)], math.nan)
    product = x * fbar * v
    with np.errstate(divide="ignore", invalid="ignore"):
        relative = np.sqrt(np.where(fbar > 0, (fbar_se / fbar) ** 2, 0.0) + np.where(v > 0, (v_err / v) ** 2, 0.0))
    band = product * relative
    usable = np.isfinite(product)
    within = float(np.mean(np.abs(product[usable] - constant) <= 3.0 * band[usable] + 1e-12)) if np.any(usable) else math.nan

    fit_based = ell_plus is None
    if ell_plus is None:
        ell_plus = fit_ell_plus(ladder, product_exponent)
    v_minus_mean, _ = ladder.v_minus
    cumulative = np.cumsum(v_minus_mean)
    v_minus = cumulative[np.minimum(j, ladder.bins - 1)]
    ratio = v_minus * np.asarray(ell_plus(x), dtype=float) / np.asarray(ell(x), dtype=float)

    return LadderSRT(
        x=x,
        fbar=fbar,
        v_plus=v,
        product=product,
        band=band,
        constant=constant,
        within_fraction=within,
        v_minus_ratio=ratio,
        v_minus_sup=float(np.max(ratio)),
        v_minus_trend=bounded_verdict(x, ratio, settings),
        trend=decay_verdict(x[usable], np.abs(product[usable] - constant) / constant, settings),
        fit_based=fit_based,
        censoring_fraction=ladder.censoring_fraction,
    )


# ----------------------------------------------------------------------
# Tail index and positivity
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class TailIndexFit:
    """Log-log slope of the empirical survival of the ladder heights, with a bootstrap interval."""

    index: float
    low: float
    high: float
    x_range: tuple[float, float]
    samples: int


def tail_index(
    ladder: LadderSample,
    seed: int = 0,
    resamples: int = 200,
    points: int = 20,
    settings: Settings | None = None,
) -> TailIndexFit:
    """
    Fit -d log P(H > x)/d log x over the top 1.5 decades below the 0.999 quantile.

    The bootstrap resamples the height counts between fit points
    multinomially, which is the same as resampling the heights themselves.
    """
    settings = settings or get_settings()
    heights = ladder.first_heights.astype(float) * ladder.h
    if heights.size < 100:
        raise ValidationFailure("ladder", "too few completed ladder heights for a tail fit")
    x_hi = float(np.quantile(heights, 0.999))
    x_lo = max(x_hi / 10**1.5, ladder.h)
    if x_hi <= x_lo:
        raise ValidationFailure("ladder", "ladder heights span too little range for a tail fit")
    grid = np.geomspace(x_lo, x_hi, points)
    edges = np.concatenate([[-np.inf], grid, [np.inf]])
    counts = np.histogram(heights, bins=edges)[0]

    def slope(bin_counts: np.ndarray) -> float:
        above = np.cumsum(bin_counts[::-1])[::-1][1:]
        survival = above / bin_counts.sum()
        keep = survival > 0
        if np.count_nonzero(keep) < 3:
            return math.nan
        fitted, _ = np.polyfit(np.log(grid[keep]), np.log(survival[keep]), 1)
        return float(-fitted)

    index = slope(counts)
    rng = chunk_generator(seed, 7, 0)
    probs = counts / counts.sum()
    boot = np.array([slope(rng.multinomial(heights.size, probs)) for _ in range(resamples)])
    boot = boot[np.isfinite(boot)]
    tail = (1.0 - settings.confidence) / 2.0
    low, high = (np.quantile(boot, [tail, 1.0 - tail]) if boot.size else (math.nan, math.nan))
    return TailIndexFit(index=index, low=float(low), high=float(high), x_range=(x_lo, x_hi), samples=heights.size)


@dataclass(frozen=True)
class PositivityCheck:
    """Monte Carlo P(S_n > 0) against the positivity parameter of the stable limit."""

    n: int
    estimate: float
    sigma: float
    varrho: float
    samples: int

    @property
    def z(self) -> float:
        return (self.estimate - self.varrho) / self.sigma if self.sigma > 0.0 else 0.0


def positivity_check(
    base: LatticeDist,
    n: int,
    samples: int,
    seed: int,
    settings: Settings | None = None,
    threads: int | None = None,
) -> PositivityCheck:
    settings = settings or get_settings()
    threads = threads or settings.threads
    if n < 1 or samples < 1:
        raise ValidationFailure("n", "need n >= 1 and at least one sample")
    sampler = WalkSampler(base)
    rows_per_batch = max(1, _MAX_BATCH_STEPS // n)

    def work(rng: np.random.Generator, chunk) -> int:
        hits, done = 0, 0
        while done < chunk.size:
            rows = min(rows_per_batch, chunk.size - done)
            sums = sampler.draw(rng, rows * n).reshape(rows, n).sum(axis=1)
            hits += int(np.count_nonzero(n * base.a + base.h * sums.astype(float) > 0.0))
            done += rows
        return hits

    hits = sum(run_chunks(ChunkPlan(samples, settings.chunk_size), seed, work, threads=threads))
    estimate = hits / samples
    return PositivityCheck(
        n=n,
        estimate=estimate,
        sigma=binomial_sigma(estimate, samples),
        varrho=limit_for(base).varrho,
        samples=samples,
    )


# ----------------------------------------------------------------------
# Compound Poisson walks
# ----------------------------------------------------------------------


@dataclass
class RenewalEstimate:
    """Simulated x F̄(x) Û(x+I] on coarse cells against the SRT constant."""

    x: np.ndarray
    fbar: np.ndarray
    u: np.ndarray
    u_se: np.ndarray
    constant: float
    n_max: int
    samples: int

    @property
    def normalized(self) -> np.ndarray:
        return self.x * self.fbar * self.u

    def write_csv(self, path: Path) -> None:
        write_table(path, ["x", "Fbar", "U_hat", "U_se", "xFbarU"], [self.x, self.fbar, self.u, self.u_se, self.normalized])

    def summary(self) -> dict:
        top = self.x >= self.x[-1] / 10**0.5
        return {
            "constant": self.constant,
            "n_max": self.n_max,
            "samples": self.samples,
            "top_half_decade_mean": float(np.mean(self.normalized[top])),
        }


class CompoundPoisson:
    """
    Steps X = Y_1 + ... + Y_N + W with N ~ Poisson(mu), Y_i ~ F_nu and W a bounded small-jump law.

    S_n is then a Poisson(n mu) compound of F_nu plus an independent W^{*n}.
    """

    def __init__(self, nu: LatticeDist, mu: float, small: LatticeDist | None = None):
        if mu <= 0.0:
            raise ValidationFailure("mu", "Lévy mass beyond 1 must be positive")
        if nu.a != 0.0:
            raise ValidationFailure("nu.a", "jump law must live on hZ")
        small = small or LatticeDist(h=nu.h, a=0.0, i_min=0, masses=np.ones(1), kind="explicit")
        if small.h != nu.h or small.a != 0.0:
            raise ValidationFailure("small", "small-jump law must share the lattice hZ")
        if small.tail_mass_right > 0.0 or small.tail_mass_left > 0.0:
            raise ValidationFailure("small", "small-jump law must have bounded support")
        self.nu = nu
        self.mu = mu
        self.small = small
        self.h = nu.h
        self._jumps = WalkSampler(nu)
        self._small_powers: dict[int, np.ndarray] = {}

    @property
    def ell(self) -> RegVarFn:
        """ell of the compound law: ell_nu/mu."""
        return default_ell(self.nu).rescaled(1.0 / self.mu)

    def small_power(self, n: int) -> tuple[int, np.ndarray]:
        """W^{*n} as (first index, masses)."""
        if n not in self._small_powers:
            self._small_powers[n] = naive_power(self.small.masses, n) if n <= 64 else self._fft_power(n)
        return n * self.small.i_min, self._small_powers[n]

    def _fft_power(self, n: int) -> np.ndarray:
        out, square, k = np.ones(1), self.small.masses.copy(), n
        while k:
            if k & 1:
                out = np.maximum(fft_convolve(out, square), 0.0)
            k >>= 1
            if k:
                square = np.maximum(fft_convolve(square, square), 0.0)
        return out / out.sum()

    def sample(self, rng: np.random.Generator, n: int, size: int) -> np.ndarray:
        """size draws of S_n as lattice indices."""
        counts = rng.poisson(n * self.mu, size=size)
        jumps = sum_groups(self._jumps.draw(rng, int(counts.sum())), counts)
        first, masses = self.small_power(n)
        cumulative = np.cumsum(masses)
        slots = np.searchsorted(cumulative, rng.random(size) * cumulative[-1], side="right")
        return jumps + first + np.minimum(slots, masses.size - 1)

    def step_draws(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.sample(rng, 1, size)

    def law(self, n: int, w_lo: int, w_hi: int, settings: Settings | None = None) -> np.ndarray:
        """P(S_n = h k) for k in w_lo..w_hi: a Poisson mixture of F_nu powers convolved with W^{*n}."""
        settings = settings or get_settings()
        powers = ConvPowerSet(self.nu, min(w_lo, 0), max(w_hi, 0), settings)
        rate = n * self.mu
        k_max = int(poisson.isf(_POISSON_CUTOFF, rate)) + 1
        weights = poisson.pmf(np.arange(k_max + 1), rate)
        mixture = np.zeros(powers.size)
        vec = powers.unit()
        for k in range(k_max + 1):
            mixture += weights[k] * vec.values
            if k < k_max:
                vec = powers.step(vec)
        first, small = self.small_power(n)
        full = fft_convolve(mixture, small)
        start = powers.w_lo + first
        out = np.zeros(w_hi - w_lo + 1)
        idx = np.arange(full.size) + start
        keep = (idx >= w_lo) & (idx <= w_hi)
        out[idx[keep] - w_lo] = np.maximum(full[keep], 0.0)
        return out

    def first_order_gap(self, w_lo: int, w_hi: int, settings: Settings | None = None) -> float:
        """max |P(S_1 = .) - ((1-mu) delta_0 + mu F_nu)| on the window; at most mu^2 when W = 0."""
        exact = self.law(1, w_lo, w_hi, settings)
        approx = self.mu * self.nu.vector(w_lo, w_hi)
        if w_lo <= 0 <= w_hi:
            approx[-w_lo] += 1.0 - self.mu
        return float(np.max(np.abs(exact - approx)))

    def tail(self, x, w_lo: int, w_hi: int, settings: Settings | None = None) -> np.ndarray:
        """P(S_1 > x) from the exact window law; the window must hold the left side of the law."""
        law = self.law(1, w_lo, w_hi, settings)
        cumulative = np.cumsum(law)
        x = np.asarray(x, dtype=float)
        j = np.floor(x / self.h + _INDEX_SLACK).astype(np.int64)
        below = np.where(j >= w_lo, cumulative[np.clip(j - w_lo, 0, law.size - 1)], 0.0)
        return 1.0 - below

    def stable_limit(self) -> StableLimit:
        rho = self.nu.left_tail_ratio if self.nu.left_tail_ratio is not None else 0.0
        return stable_limit(self.ell.alpha, rho)

    def srt_constant(self) -> float:
        return self.stable_limit().srt_constant(self.h)

    def renewal_estimate(
        self,
        x_grid,
        cell: float,
        samples: int,
        seed: int,
        n_max: int | None = None,
        settings: Settings | None = None,
        threads: int | None = None,
        progress: Progress | None = None,
    ) -> RenewalEstimate:
        """
        Û(x + (0, cell]] h/cell by simulating walks of n_max steps, normalised by x F̄(x).

        n_max defaults to ceil(ell(4 max x)), where a_n passes four times the scan.
        """
        settings = settings or get_settings()
        threads = threads or settings.threads
        x = np.sort(np.asarray(x_grid, dtype=float))
        if x.size == 0 or x[0] <= 0.0:
            raise ValidationFailure("x_grid", "scan points must be positive")
        if cell < self.h:
            raise ValidationFailure("cell", "cells must be at least one lattice span wide")
        n_max = n_max or max(1, int(math.ceil(snap_integers(float(self.ell(4.0 * x[-1]))))))
        lo = np.floor(x / self.h + _INDEX_SLACK).astype(np.int64)
        width = int(round(cell / self.h))
        rows_per_batch = max(1, _MAX_BATCH_STEPS // n_max)

        def work(rng: np.random.Generator, chunk) -> tuple[np.ndarray, np.ndarray]:
            total = np.zeros(x.size)
            squares = np.zeros(x.size)
            done = 0
            while done < chunk.size:
                rows = min(rows_per_batch, chunk.size - done)
                walk = np.cumsum(self.step_draws(rng, rows * n_max).reshape(rows, n_max), axis=1)
                for i in range(x.size):
                    visits = np.count_nonzero((walk > lo[i]) & (walk <= lo[i] + width), axis=1).astype(float)
                    total[i] += visits.sum()
                    squares[i] += float(np.dot(visits, visits))
                done += rows
            return total, squares

        parts = run_chunks(
            ChunkPlan(samples, settings.chunk_size), seed, work, threads=threads, progress=progress,
            description="Compound Poisson walks",
        )
        total = np.sum([p[0] for p in parts], axis=0)
        squares = np.sum([p[1] for p in parts], axis=0)
        mean = total / samples
        se = np.sqrt(np.maximum(squares / samples - mean**2, 0.0) / max(samples - 1, 1))
        span = int(math.ceil(x[-1] / self.h)) + 8
        w_lo = -span if self.nu.can_decrease or self.small.can_decrease else min(0, int(self.small.i_min))
        fbar = self.tail(x, w_lo, span, settings)
        return RenewalEstimate(
            x=x,
            fbar=fbar,
            u=mean / width,
            u_se=se / width,
            constant=self.srt_constant(),
            n_max=n_max,
            samples=samples,
        )


def compound_poisson_build(nu: LatticeDist, mu: float, small: LatticeDist | None = None) -> CompoundPoisson:
    return CompoundPoisson(nu, mu, small)


__all__ = [
    "CompoundPoisson",
    "LadderSample",
    "LadderSRT",
    "PositivityCheck",
    "RenewalEstimate",
    "TailIndexFit",
    "WienerHopfTable",
    "compound_poisson_build",
    "fit_ell_plus",
    "ladder_srt_check",
    "positivity_check",
    "sample_ladder",
    "tail_index",
    "wiener_hopf_residual",
]
