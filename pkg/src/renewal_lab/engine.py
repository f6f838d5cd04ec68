"""Renewal engine - accumulates convolution powers into renewal measures."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from rich.progress import Progress, TaskID
from scipy import fft as sp_fft
from scipy.integrate import trapezoid

from .artifacts import write_table
from .checkpoint import CheckpointData, CheckpointManager, job_digest
from .config import Settings, get_settings
from .convolution import ConvPowerSet, MassVector, SpectralFactor, window_bounds
from .distributions.base import LatticeDist
from .errors import ValidationFailure
from .omega import cell_coefficients
from .regvar import NormingSeq, RegVarFn, snap_integers
from .stable import StableLimit, limit_for

logger = logging.getLogger(__name__)

_INDEX_SLACK = 1e-9
_MAX_PIECES = 1 << 20
_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(3)


def default_ell(base: LatticeDist) -> RegVarFn:
    """The tail function of the law, or x/mu for a law with finite positive mean and no tail."""
    if base.right_tail is not None:
        return base.right_tail
    positions = base.position(np.arange(base.i_min, base.i_max + 1))
    mean = float(np.dot(positions, base.masses))
    if mean <= 0.0:
        raise ValidationFailure("right_tail", "law without a tail model needs a positive mean")
    return RegVarFn(alpha=1.0, scale=1.0 / mean)


@dataclass
class RenewalScan:
    """U_N(x+I], its normalisation x F̄(x) U_N(x+I] and the small-n sums on a grid."""

    x: np.ndarray
    fbar: np.ndarray
    u: np.ndarray
    g: dict[float, np.ndarray]
    n_max: int
    n_seq: int
    window: tuple[int, int]
    remainder: np.ndarray
    u_error: float
    flagged_steps: int
    first_flagged: int
    clamp: dict
    srt_constant: float | None = None
    resumed: bool = False

    @property
    def normalized(self) -> np.ndarray:
        return self.x * self.fbar * self.u

    def small_n(self, delta: float) -> np.ndarray:
        """x F̄(x) G_delta(x)."""
        return self.x * self.fbar * self.g[delta]

    def write_csv(self, path: Path) -> None:
        header = ["x", "U_N", "xFbarU", "remainder_estimate"] + [f"G_delta_{d:g}" for d in self.g]
        columns = [self.x, self.u, self.normalized, self.remainder] + [self.g[d] for d in self.g]
        write_table(path, header, columns)

    def summary(self) -> dict:
        top = self.x >= self.x[-1] / 10 ** 0.5
        return {
            "n_max": self.n_max,
            "n_sequential": self.n_seq,
            "window": list(self.window),
            "u_error_bound": self.u_error,
            "flagged_steps": self.flagged_steps,
            "first_flagged_step": self.first_flagged,
            "clamp": self.clamp,
            "srt_constant": self.srt_constant,
            "top_half_decade_mean": float(np.mean(self.normalized[top])) if np.any(top) else math.nan,
            "resumed": self.resumed,
        }


@dataclass
class SmallNTable:
    """x F̄(x) G_delta(x) for each delta, with its top-decade summary."""

    x: np.ndarray
    deltas: tuple[float, ...]
    values: np.ndarray  # (len(deltas), len(x))
    top_decade_max: np.ndarray
    delta_slope: float

    @property
    def floor(self) -> float:
        return float(self.top_decade_max.min())

    def write_csv(self, path: Path) -> None:
        header = ["x"] + [f"xFbarG_delta_{d:g}" for d in self.deltas]
        write_table(path, header, [self.x, *self.values])

    def summary(self) -> dict:
        return {
            "deltas": list(self.deltas),
            "top_decade_max": self.top_decade_max.tolist(),
            "delta_slope": self.delta_slope,
            "floor": self.floor,
        }


@dataclass
class LowerBound:
    """Both sides of the small-n lower bound at one x."""

    x: float
    lhs: float
    rhs: float
    n_lo: int
    n_hi: int
    terms: list[float] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.lhs >= self.rhs


@dataclass
class LLTCheck:
    """a_n F^{*n}(a_n x + I] against h p(x)."""

    n: int
    a_n: float
    x: np.ndarray
    scaled: np.ndarray
    target: np.ndarray

    @property
    def sup_diff(self) -> float:
        return float(np.max(np.abs(self.scaled - self.target)))


def fit_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log y against log x over positive entries."""
    keep = (x > 0) & (y > 0)
    if np.count_nonzero(keep) < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope)


class RenewalEngine:
    """Exact renewal sums of one lattice law on a window reaching x_max."""

    def __init__(
        self,
        base: LatticeDist,
        x_max: float,
        ell: RegVarFn | None = None,
        window_log2: int | None = None,
        settings: Settings | None = None,
    ):
        self.settings = settings or get_settings()
        self.base = base
        self.ell = ell or default_ell(base)
        if self.ell.alpha <= 0.0:
            raise ValidationFailure("ell", "tail function must have a positive exponent")
        self.norming = NormingSeq(self.ell)
        # Cells x+I and x+(0, 2h] must fit
        right = int(math.floor(x_max / base.h)) + 3
        w_lo, w_hi = window_bounds(base, right, self.settings, window_log2)
        self.powers = ConvPowerSet(base, w_lo, w_hi, self.settings)
        # Blocks mix powers, which live on n*a + hZ; they need a = 0
        self.block = self.settings.reprojection_interval if base.a == 0.0 else 1

    @property
    def window(self) -> tuple[int, int]:
        return self.powers.w_lo, self.powers.w_hi

    def cells(self, x: np.ndarray, n: int, offset: int = 1) -> np.ndarray:
        """Index of the lattice point of S_n in (x, x+h] shifted by offset-1 cells."""
        k = np.floor((x - n * self.base.a) / self.base.h + _INDEX_SLACK).astype(np.int64)
        return k + offset

    def default_n_max(self, x_max: float) -> int:
        """Smallest N with a_N >= 4 x_max, i.e. ceil(ell(4 x_max))."""
        return max(1, int(math.ceil(snap_integers(self.ell(4.0 * x_max)))))

    def thresholds(self, x: np.ndarray, deltas) -> np.ndarray:
        """ell(delta x) for each delta (rows) and x (columns)."""
        return np.vstack([snap_integers(np.asarray(self.ell(d * x), dtype=float)) for d in deltas])

    # ------------------------------------------------------------------
    # Renewal scan
    # ------------------------------------------------------------------

    def renewal_scan(
        self,
        x_grid,
        n_max: int | None = None,
        deltas=None,
        progress: Progress | None = None,
        checkpoint: CheckpointManager | None = None,
        identity: str = "",
        limit: StableLimit | None = None,
        with_remainder: bool = True,
    ) -> RenewalScan:
        """
        Accumulate U_N(x+I] = sum_{n <= N} F^{*n}(x+I] and G_delta(x) = sum_{n < ell(delta x)} F^{*n}(x+I].

        Powers below the largest G_delta horizon are stepped one at a time.
        Past it, blocks of K steps add P_m * (F^{*0} + ... + F^{*(K-1)}) to U
        and advance with P_{m+K} = P_m * F^{*K}.

        Args:
            x_grid: Positive scan points.
            n_max: Last power to include (default: smallest N with a_N >= 4 max x).
            deltas: delta values for the small-n sums (default from settings).
            progress: Optional progress display.
            checkpoint: Optional checkpoint manager; a matching checkpoint is resumed.
            identity: Extra job identity folded into the checkpoint digest.
            limit: Stable limit used for the LLT remainder and the SRT constant.
            with_remainder: Whether to estimate the remainder beyond n_max.

        Returns:
            The RenewalScan.
        """
        x = np.sort(np.asarray(x_grid, dtype=float))
        if x.size == 0 or x[0] <= 0.0:
            raise ValidationFailure("x_grid", "scan points must be positive")
        if self.base.index_floor(x[-1]) + 1 > self.powers.w_hi:
            raise ValidationFailure("x_grid", "scan reaches beyond the convolution window")
        deltas = tuple(self.settings.delta_grid if deltas is None else deltas)
        if any(not 0.0 < d <= 1.0 for d in deltas):
            raise ValidationFailure("deltas", "delta values must lie in (0, 1]")
        n_max = self.default_n_max(float(x[-1])) if n_max is None else int(n_max)
        if n_max < 0:
            raise ValidationFailure("n_max", "n_max must be nonnegative")

        if deltas:
            horizon = self.thresholds(x, deltas)
            n_seq = min(n_max + 1, int(math.ceil(horizon.max())))
        else:
            horizon = np.zeros((0, x.size))
            n_seq = 0
        digest = job_digest(self._identity(identity, x, n_max, deltas))
        block = self._prepare_block() if self.block > 1 and n_max + 1 - n_seq >= self.block else None

        # Running state
        n = 0
        power = self.powers.unit()
        u = np.zeros(x.size)
        g = np.zeros((len(deltas), x.size))
        u_error = 0.0
        flagged, first_flagged = 0, -1
        resumed = False

        if checkpoint is not None:
            state = checkpoint.load(digest)
            if state is not None and (state.w_lo, state.w_hi) == self.window:
                n = state.n
                power = self.powers.finish(state.power.copy(), n, state.power_error)
                u, g, u_error = state.u, state.g, state.u_error
                flagged, first_flagged = state.flagged_steps, state.first_flagged
                ledger = self.powers.ledger
                ledger.total, ledger.count, ledger.large = state.clamp_total, state.clamp_count, state.clamp_large
                resumed = True
                logger.info("resuming renewal scan at n=%d of %d", n, n_max)

        task_id: TaskID | None = None
        if progress:
            task_id = progress.add_task("Accumulating powers", total=n_max + 1, completed=n)

        since_save = 0
        while n <= n_max:
            if block is not None and n >= n_seq and n + self.block <= n_max + 1:
                power, u_add, err = self._block_step(power, x, block)
                u += u_add
                u_error += err
                advanced = self.block
            else:
                values = power.at(self.cells(x, n))
                u += values
                u_error += power.error
                if n < n_seq:
                    g += np.where(n < horizon, values[None, :], 0.0)
                advanced = 1
                if n < n_max:
                    power = self.powers.step(power)
            if power.flagged:
                flagged += advanced
                if first_flagged < 0:
                    first_flagged = n + advanced
                    logger.warning("window error bound exceeded from power %d", first_flagged)
            n += advanced
            if progress and task_id is not None:
                progress.advance(task_id, advanced)
            since_save += 1
            if checkpoint is not None and since_save >= 16 and n <= n_max:
                self._save(checkpoint, digest, n, power, u, g, u_error, flagged, first_flagged)
                since_save = 0

        if checkpoint is not None:
            checkpoint.clean()

        if with_remainder:
            remainder = self.llt_remainder(x, n_max, limit)
        else:
            remainder = np.full(x.size, math.nan)
        constant = None
        if limit is not None and limit.alpha < 1.0:
            constant = limit.srt_constant(self.base.h)

        return RenewalScan(
            x=x,
            fbar=np.asarray(self.base.tail(x), dtype=float),
            u=u,
            g={d: g[i] for i, d in enumerate(deltas)},
            n_max=n_max,
            n_seq=n_seq,
            window=self.window,
            remainder=remainder,
            u_error=u_error,
            flagged_steps=flagged,
            first_flagged=first_flagged,
            clamp=self.powers.ledger.summary(),
            srt_constant=constant,
            resumed=resumed,
        )

    def _identity(self, identity: str, x: np.ndarray, n_max: int, deltas) -> str:
        grid = hashlib.sha256(x.tobytes()).hexdigest()
        return f"{identity}|{self.window}|{n_max}|{deltas}|{self.block}|{grid}"

    def _save(self, checkpoint, digest, n, power, u, g, u_error, flagged, first_flagged) -> None:
        ledger = self.powers.ledger
        checkpoint.save(
            CheckpointData(
                job_digest=digest,
                n=n,
                w_lo=self.powers.w_lo,
                w_hi=self.powers.w_hi,
                power=power.values,
                power_error=power.error,
                u=u,
                u_error=u_error,
                g=g,
                flagged_steps=flagged,
                first_flagged=first_flagged,
                clamp_total=ledger.total,
                clamp_count=ledger.count,
                clamp_large=ledger.large,
            )
        )

    def _prepare_block(self) -> dict:
        """B_K = sum_{k<K} F^{*k} and F^{*K} as spectral factors, with their error terms."""
        K = self.block
        vec = self.powers.unit()
        running = np.zeros(self.powers.size)
        slack = 0.0
        for _ in range(K):
            running += vec.values
            slack += vec.error + self.powers.returnable(vec)
            vec = self.powers.step(vec)
        logger.debug("block of %d steps prepared", K)
        return {
            "sum": SpectralFactor(running, self.powers.length),
            "power": SpectralFactor(vec.values, self.powers.length),
            "sum_slack": slack,
            "power_vec": vec,
        }

    def _block_step(self, power: MassVector, x: np.ndarray, block: dict) -> tuple[MassVector, np.ndarray, float]:
        powers = self.powers
        spectrum = sp_fft.rfft(power.values, powers.length)
        partial = powers.crop(block["sum"].apply_spectrum(spectrum))
        powers.ledger.record(partial)
        u_add = partial[self.cells(x, 0) - powers.w_lo]
        slack = power.error + powers.returnable(power)
        u_error = self.block * slack + block["sum_slack"]
        step_vec = block["power_vec"]
        advanced = powers.finish(
            powers.crop(block["power"].apply_spectrum(spectrum)),
            power.n + self.block,
            slack + step_vec.error + powers.returnable(step_vec),
        )
        return advanced, u_add, u_error

    # ------------------------------------------------------------------
    # Remainder beyond n_max
    # ------------------------------------------------------------------

    def llt_remainder(self, x: np.ndarray, n_max: int, limit: StableLimit | None = None) -> np.ndarray:
        """
        sum_{n > n_max} h p(x/a_n)/a_n, approximated by the integral over s = a(t) >= a_{n_max}
        of h p(x/s)/s ell'(s) ds. NaN when the law has no stable density (alpha >= 1).
        """
        try:
            limit = limit or limit_for(self.base)
        except ValidationFailure:
            return np.full(x.size, math.nan)
        if limit.alpha >= 1.0:
            return np.full(x.size, math.nan)
        s0 = max(self.norming(max(n_max, 1)), 1.0)
        span = min(40.0 / (1.0 - limit.alpha), 600.0)
        v = math.log(s0) + np.linspace(0.0, span, 4001)
        s = np.exp(v)
        weight = np.asarray(self.ell(s)) * np.asarray(self.ell.log_derivative(s)) / s
        density = limit.density_fast(x[:, None] / s[None, :])
        return self.base.h * trapezoid(density * weight[None, :], v, axis=1)

    # ------------------------------------------------------------------
    # Small-n table
    # ------------------------------------------------------------------

    def small_n_limit_table(self, x_list, deltas=None, progress: Progress | None = None) -> SmallNTable:
        """
        x F̄(x) G_delta(x) over x and delta, stepping powers only up to the largest horizon.

        Per delta the table reports the max over the largest decade of x, and
        the slope of that max against delta on a log-log scale.
        """
        x = np.sort(np.asarray(x_list, dtype=float))
        deltas = tuple(self.settings.delta_grid if deltas is None else deltas)
        if not deltas:
            raise ValidationFailure("deltas", "need at least one delta")
        horizon = self.thresholds(x, deltas)
        n_last = max(0, int(math.ceil(horizon.max())) - 1)
        scan = self.renewal_scan(x, n_max=n_last, deltas=deltas, progress=progress, with_remainder=False)
        values = np.vstack([scan.small_n(d) for d in deltas])
        top = x >= x[-1] / 10.0
        top_max = values[:, top].max(axis=1)
        slope = fit_slope(np.asarray(deltas), top_max)
        return SmallNTable(x=x, deltas=deltas, values=values, top_decade_max=top_max, delta_slope=slope)

    # ------------------------------------------------------------------
    # Lower bound
    # ------------------------------------------------------------------

    def weighted_omega(self, x: float, a_n: float, E: tuple[float, float], limit: StableLimit) -> float:
        """
        int_E p(t) omega(x - a_n t) dt.

        In y = x - a_n t the integrand is p((x-y)/a_n) c_j y / a_n on each
        lattice cell, so Gauss-Legendre nodes per cell integrate it to the
        smoothness of p.
        """
        e0, e1 = E
        y_lo, y_hi = max(x - a_n * e1, 0.0), x - a_n * e0
        if y_hi <= y_lo:
            return 0.0
        base = self.base
        j_first = base.index_floor(y_lo)
        j_last = base.index_floor(y_hi)
        total = 0.0
        start = j_first
        while start <= j_last:
            stop = min(j_last, start + _MAX_PIECES - 1)
            j = np.arange(start, stop + 1, dtype=np.int64)
            left = np.maximum(base.position(j), y_lo)
            right = np.minimum(base.position(j) + base.h, y_hi)
            coef = cell_coefficients(base, j)
            half = 0.5 * np.maximum(right - left, 0.0)
            mid = 0.5 * (right + left)
            y = mid[:, None] + half[:, None] * _GAUSS_NODES[None, :]
            p = limit.density_fast((x - y) / a_n)
            total += float(np.sum(half[:, None] * _GAUSS_WEIGHTS[None, :] * p * coef[:, None] * y))
            start = stop + 1
        return total / a_n

    def lower_bound_scan(
        self,
        E: tuple[float, float],
        delta: float,
        n0: int,
        x_list,
        limit: StableLimit | None = None,
    ) -> list[LowerBound]:
        """
        lhs = (x/ell(x)) sum_{n < ell(delta x)} F^{*n}(x + (0, 2h]]
        rhs = (1/(4 ell(x)^2)) sum_{n0 <= n < ell(delta x)} n int_E p(t) omega(x - a_n t) dt
        """
        e0, e1 = E
        if not e0 < e1:
            raise ValidationFailure("E", "interval must have positive length")
        limit = limit or limit_for(self.base)
        probe = np.linspace(e0, e1, 65)
        if float(np.min(limit.density(probe))) <= 0.0:
            raise ValidationFailure("E", "stable density vanishes on E")
        x = np.sort(np.asarray(x_list, dtype=float))
        horizon = snap_integers(np.asarray(self.ell(delta * x), dtype=float))
        n_hi = np.ceil(horizon).astype(int)
        lhs_sum = np.zeros(x.size)
        power = self.powers.unit()
        for n in range(int(n_hi.max()) if n_hi.size else 0):
            active = n < horizon
            pair = power.at(self.cells(x, n, 1)) + power.at(self.cells(x, n, 2))
            lhs_sum += np.where(active, pair, 0.0)
            power = self.powers.step(power)
        results = []
        for i, xi in enumerate(x):
            ell_x = float(self.ell(xi))
            terms = []
            for n in range(max(n0, 1), int(n_hi[i])):
                if n >= horizon[i]:
                    break
                terms.append(n * self.weighted_omega(xi, self.norming(n), E, limit))
            rhs = sum(terms) / (4.0 * ell_x**2)
            lhs = xi / ell_x * float(lhs_sum[i])
            results.append(LowerBound(x=float(xi), lhs=lhs, rhs=rhs, n_lo=max(n0, 1), n_hi=int(n_hi[i]), terms=terms))
        return results

    def lower_bound_check(
        self,
        E: tuple[float, float],
        delta: float,
        n0: int,
        x: float,
        limit: StableLimit | None = None,
    ) -> LowerBound:
        return self.lower_bound_scan(E, delta, n0, [x], limit)[0]


def llt_check(base: LatticeDist, n: int, x_grid=None, settings: Settings | None = None, window_log2: int | None = None) -> LLTCheck:
    """sup over x of |a_n F^{*n}(a_n x + I] - h p(x)| with the powers computed exactly."""
    settings = settings or get_settings()
    if n < 1:
        raise ValidationFailure("n", "n must be at least 1")
    x = np.linspace(0.2, 5.0, 49) if x_grid is None else np.asarray(x_grid, dtype=float)
    limit = limit_for(base)
    norming = NormingSeq(default_ell(base))
    a_n = norming(n)
    engine = RenewalEngine(base, a_n * float(np.max(np.abs(x))), window_log2=window_log2 or 4, settings=settings)
    power = engine.powers.conv_power(n)
    scaled = a_n * power.at(engine.cells(a_n * x, n))
    target = base.h * np.asarray(limit.density(x), dtype=float)
    return LLTCheck(n=n, a_n=a_n, x=x, scaled=scaled, target=target)
