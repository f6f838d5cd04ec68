"""Task execution: one job in, a manifest of artifacts out."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Callable

import numpy as np
from rich.progress import Progress

from .artifacts import Manifest, canonical_hash, write_json, write_rows
from .checkpoint import CheckpointManager
from .config import Settings
from .criteria import CriterionInputs, check_levy_criteria, evaluate_criteria
from .deviation import (
    event_probe,
    lambda_check,
    lld_bound_check,
    r_function,
    r_relaxed,
    tilting_identity,
    write_probes,
    write_r_table,
)
from .distributions import LatticeDist, build_distribution
from .engine import RenewalEngine, default_ell, fit_slope, llt_check
from .errors import NotApplicable
from .fluctuation import (
    CompoundPoisson,
    ladder_srt_check,
    positivity_check,
    sample_ladder,
    tail_index,
    wiener_hopf_residual,
)
from .specs import JobSpec
from .stable import limit_for

logger = logging.getLogger(__name__)

TaskRunner = Callable[[JobSpec, LatticeDist, Manifest, Settings, "Progress | None"], dict]


def run_renewal_scan(job: JobSpec, base: LatticeDist, manifest: Manifest, settings: Settings, progress: Progress | None) -> dict:
    block = job.scan
    x = block.x.array()
    engine = RenewalEngine(base, x[-1], window_log2=block.window_log2, settings=settings)
    path = manifest.add("renewal.csv", "renewal-scan")
    checkpoint = CheckpointManager(path) if block.checkpoint else None
    limit = limit_for(base) if base.right_tail is not None else None
    scan = engine.renewal_scan(
        x,
        n_max=block.n_max,
        deltas=block.deltas,
        progress=progress,
        checkpoint=checkpoint,
        identity=manifest.input_hash,
        limit=limit,
    )
    scan.write_csv(path)
    summary = {"scan": scan.summary()}
    if block.llt_n:
        checks = [llt_check(base, n, settings=settings) for n in block.llt_n]
        summary["llt"] = [{"n": c.n, "a_n": c.a_n, "sup_diff": c.sup_diff} for c in checks]
    return summary


def run_small_n_table(job: JobSpec, base: LatticeDist, manifest: Manifest, settings: Settings, progress: Progress | None) -> dict:
    block = job.small_n
    x = block.x.array()
    x_top = x[-1]
    if block.lower_bound is not None:
        x_top = max(x_top, float(block.lower_bound.x.array()[-1]))
    engine = RenewalEngine(base, x_top, window_log2=block.window_log2, settings=settings)
    table = engine.small_n_limit_table(x, block.deltas, progress=progress)
    table.write_csv(manifest.add("small_n.csv", "small-n-table"))
    summary = {"table": table.summary()}
    if block.lower_bound is not None:
        lb = block.lower_bound
        bounds = engine.lower_bound_scan(tuple(lb.E), lb.delta, lb.n0, lb.x.array())
        write_rows(
            manifest.add("lower_bound.csv", "lower-bound"),
            ["x", "lhs", "rhs", "n_lo", "n_hi", "holds"],
            [[b.x, b.lhs, b.rhs, b.n_lo, b.n_hi, b.holds] for b in bounds],
        )
        summary["lower_bound"] = {
            "E": list(lb.E),
            "delta": lb.delta,
            "all_hold": all(b.holds for b in bounds),
            "min_rhs": min(b.rhs for b in bounds),
        }
    return summary


def run_criteria(job: JobSpec, base: LatticeDist, manifest: Manifest, settings: Settings, progress: Progress | None) -> dict:
    block = job.criteria
    inputs = CriterionInputs(
        dist=base,
        L=block.L,
        T=block.T,
        eta=block.eta,
        x_grid=block.x.array(),
        ell=block.ell,
        theta=block.theta,
        M=block.M,
        density=block.density,
        ladder=block.ladder,
        ell_plus=block.ell_plus,
        ladder_c=block.ladder_c,
        seed=job.seed or 0,
        samples=block.samples,
        window_log2=block.window_log2,
    )
    report = evaluate_criteria(inputs, settings, progress, settings.threads, with_ground_truth=block.ground_truth)
    write_json(manifest.add("report.json", "criterion-report"), report.to_dict())
    return {"overall": report.overall, "offending": report.offending(), "ground_truth": report.ground_truth}


def run_lld_check(job: JobSpec, base: LatticeDist, manifest: Manifest, settings: Settings, progress: Progress | None) -> dict:
    block = job.lld
    table = lld_bound_check(base, block.n, block.s, block.x, settings=settings, window_log2=block.window_log2, progress=progress)
    table.write_csv(manifest.add("lld.csv", "lld-table"))
    summary = {"lld": table.summary(settings)}
    if block.tilting is not None:
        rows = []
        for n in block.tilting.n:
            for s in block.tilting.s:
                check = tilting_identity(base, s, n, block.tilting.x)
                rows.append([n, s, check.max_abs_diff])
        write_rows(manifest.add("tilting.csv", "tilting-identity"), ["n", "s", "max_abs_diff"], rows)
        summary["tilting_max_abs_diff"] = max(r[2] for r in rows)
    if block.r is not None:
        rb = block.r
        ell = default_ell(base)
        values, relaxed = [], []
        for delta in rb.deltas:
            for x in rb.x:
                values.append(
                    r_function(
                        base, ell, rb.T, rb.eta, rb.r, rb.c1, rb.c2, rb.L, delta, x,
                        mc_samples=rb.mc_samples, seed=job.seed or 0, settings=settings,
                        threads=settings.threads, progress=progress,
                    )
                )
                relaxed.append(r_relaxed(base, ell, rb.T, rb.eta, rb.L, delta, x, rb.c1))
        write_r_table(manifest.add("r_function.csv", "r-function"), values, relaxed)
        top = [b.value for b in relaxed if b.x == max(rb.x)]
        summary["r"] = {
            "values": [v.summary() for v in values],
            "relaxed_delta_slope": fit_slope(np.asarray(rb.deltas, dtype=float), np.asarray(top)) if len(rb.deltas) > 1 else None,
        }
    if block.lambda_ is not None:
        lb = block.lambda_
        check = lambda_check(base, default_ell(base), lb.n_lo, lb.n_hi, lb.samples, job.seed or 0, settings)
        summary["lambda"] = check.summary()
    return summary


def run_ladder(job: JobSpec, base: LatticeDist, manifest: Manifest, settings: Settings, progress: Progress | None) -> dict:
    block = job.ladder
    sample = sample_ladder(
        base,
        block.paths,
        step_cap=block.step_cap,
        seed=job.seed,
        m=block.m,
        t_grid=block.t,
        height_bins=block.height_bins,
        settings=settings,
        progress=progress,
        threads=settings.threads,
    )
    sample.write_csv(manifest.add("ladder.csv", "ladder-histograms"))
    residuals = wiener_hopf_residual(base, sample)
    residuals.write_csv(manifest.add("wiener_hopf.csv", "wiener-hopf"))
    summary = {"ladder": sample.summary(), "wiener_hopf": residuals.summary()}
    if block.x is not None:
        try:
            srt = ladder_srt_check(base, sample, block.x.array(), ell_plus=block.ell_plus, settings=settings)
        except NotApplicable as e:
            summary["ladder_srt"] = {"not_applicable": str(e)}
        else:
            srt.write_csv(manifest.add("ladder_srt.csv", "ladder-srt"))
            summary["ladder_srt"] = srt.summary()
    if block.tail_fit and sample.first_heights.size >= 100:
        fit = tail_index(sample, seed=job.seed, settings=settings)
        summary["tail_index"] = {
            "index": fit.index,
            "interval": [fit.low, fit.high],
            "x_range": list(fit.x_range),
            "expected": default_ell(base).alpha * limit_for(base).varrho if base.right_tail is not None else None,
        }
    if block.positivity is not None:
        check = positivity_check(base, block.positivity.n, block.positivity.samples, job.seed, settings, settings.threads)
        summary["positivity"] = {
            "n": check.n,
            "estimate": check.estimate,
            "sigma": check.sigma,
            "varrho": check.varrho,
            "z": check.z,
        }
    return summary


def run_infdiv(job: JobSpec, base: LatticeDist, manifest: Manifest, settings: Settings, progress: Progress | None) -> dict:
    block = job.infdiv
    small = build_distribution(block.small) if block.small is not None else None
    walk = CompoundPoisson(base, block.mu, small)
    w_lo, w_hi = block.gap_window
    summary: dict = {"first_order_gap": walk.first_order_gap(w_lo, w_hi, settings), "mu": block.mu}
    estimate = walk.renewal_estimate(
        block.x.array(), block.cell, block.samples, job.seed, n_max=block.n_max,
        settings=settings, threads=settings.threads, progress=progress,
    )
    estimate.write_csv(manifest.add("infdiv_renewal.csv", "infdiv-renewal"))
    summary["renewal"] = estimate.summary()
    if block.criteria is not None:
        cb = block.criteria
        record = check_levy_criteria(
            base, cb.L, cb.T, cb.eta, cb.eps, block.x.array(), mu=block.mu,
            settings=settings, window_log2=cb.window_log2, progress=progress,
        )
        write_json(manifest.add("levy_report.json", "levy-criteria"), record.to_dict())
        summary["levy_verdict"] = record.verdict
    return summary


def run_probe(job: JobSpec, base: LatticeDist, manifest: Manifest, settings: Settings, progress: Progress | None) -> dict:
    block = job.probe
    probes = []
    task_id = progress.add_task("Event probes", total=len(block.points)) if progress else None
    for point in block.points:
        probes.append(
            event_probe(
                base, point.n, point.k, point.x, point.eps, point.gamma, block.samples, job.seed,
                exact=block.exact, settings=settings, threads=settings.threads, window_log2=block.window_log2,
            )
        )
        if progress and task_id is not None:
            progress.advance(task_id)
    write_probes(manifest.add("probes.csv", "event-probes"), probes)
    return {"probes": [p.summary() for p in probes]}


# Map tasks to runners
TASKS: dict[str, TaskRunner] = {
    "renewal-scan": run_renewal_scan,
    "small-n-table": run_small_n_table,
    "criteria": run_criteria,
    "lld-check": run_lld_check,
    "ladder": run_ladder,
    "infdiv": run_infdiv,
    "probe": run_probe,
}


def run_job(job: JobSpec, out_dir: Path, settings: Settings, progress: Progress | None = None) -> Manifest:
    """
    Run one job and write its artifacts plus manifest.json into out_dir.

    Args:
        job: The validated job.
        out_dir: Output directory (created if missing).
        settings: Effective settings for the run.
        progress: Optional progress display.

    Returns:
        The written manifest.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    base = build_distribution(job.distribution)
    manifest = Manifest(out_dir=out_dir, task=job.task, input_hash=canonical_hash(job.canonical()), seed=job.seed)
    logger.info("running %s on a %s law", job.task, base.kind)
    summary = TASKS[job.task](job, base, manifest, settings, progress)
    write_json(
        manifest.add("summary.json", "summary"),
        {
            "task": job.task,
            "seed": job.seed,
            "distribution": base.describe(),
            "settings": settings.model_dump(),
            "result": summary,
        },
    )
    manifest.write()
    return manifest
