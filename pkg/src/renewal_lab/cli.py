"""CLI entry point for the renewal laboratory."""

import logging
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TaskProgressColumn,
    TextColumn,
    TimeRemainingColumn,
)

from .distributions import build_distribution
from .errors import BudgetExceeded, RenewalLabError, ValidationFailure
from .runner import run_job
from .specs import JobSpec, load_job

app = typer.Typer(
    name="renewal-lab",
    help="Numerical laboratory for strong renewal theorems of heavy-tailed lattice walks",
    no_args_is_help=True,
)

console = Console()

EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_BUDGET = 3


def create_progress() -> Progress:
    """Create a configured progress bar."""
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        TimeRemainingColumn(),
        console=console,
    )


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False, rich_tracebacks=verbose)],
        force=True,
    )


def _load(task: str | None, spec: Path, seed: int | None) -> JobSpec:
    job = load_job(spec)
    if task is not None and job.task != task:
        raise ValidationFailure("task", f"spec declares {job.task}, command runs {task}")
    if seed is not None:
        job = job.model_copy(update={"seed": seed}).check()
    return job


def _invalid(e: ValidationFailure) -> typer.Exit:
    console.print(f"[red]Invalid spec at {e.field_path}: {e.message}[/red]")
    return typer.Exit(EXIT_INVALID)


def execute(
    task: str,
    spec: Path,
    out: Path,
    seed: int | None,
    budget_mb: float | None,
    threads: int | None,
    verbose: bool,
) -> None:
    """Load, validate and run one job; map failures to exit codes."""
    setup_logging(verbose)
    try:
        job = _load(task, spec, seed)
        settings = job.settings(budget_mb=budget_mb, threads=threads)
    except ValidationFailure as e:
        raise _invalid(e)

    console.print(f"[bold]Running[/bold] {task}")
    console.print(f"  Spec: {spec}")
    console.print(f"  Law: {job.distribution.kind}")
    console.print(f"  Seed: {job.seed if job.seed is not None else '-'}")
    console.print(f"  Threads: {settings.threads}")
    console.print(f"  Output: {out}")
    console.print()

    try:
        with create_progress() as progress:
            manifest = run_job(job, out, settings, progress)
    except ValidationFailure as e:
        raise _invalid(e)
    except BudgetExceeded as e:
        console.print(f"[red]Budget exceeded: {e}[/red]")
        if verbose:
            console.print_exception()
        raise typer.Exit(EXIT_BUDGET)
    except RenewalLabError as e:
        console.print(f"[red]{task} failed: {e}[/red]")
        if verbose:
            console.print_exception()
        raise typer.Exit(EXIT_FAILURE)

    console.print()
    console.print(f"[green]{task} complete![/green]")
    for entry in sorted(manifest.entries, key=lambda e: e["file"]):
        console.print(f"  {entry['kind']}: {out / entry['file']}")
    console.print(f"  Manifest: {out / 'manifest.json'}")


SPEC_OPTION = typer.Option(..., "--spec", "-s", help="JobSpec JSON file", exists=True, readable=True)
OUT_OPTION = typer.Option(..., "--out", "-o", help="Output directory for artifacts and manifest")
SEED_OPTION = typer.Option(None, "--seed", min=0, help="Seed (overrides the spec's seed)")
BUDGET_OPTION = typer.Option(None, "--budget-mb", min=1.0, help="Memory budget for convolution windows (MiB)")
THREADS_OPTION = typer.Option(None, "--threads", "-t", min=1, help="Worker threads for Monte Carlo chunks")
VERBOSE_OPTION = typer.Option(False, "--verbose", "-v", help="Enable verbose output")


@app.command("renewal-scan")
def renewal_scan(
    spec: Path = SPEC_OPTION,
    out: Path = OUT_OPTION,
    seed: int = SEED_OPTION,
    budget_mb: float = BUDGET_OPTION,
    threads: int = THREADS_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Exact renewal sums U(x+I] and the small-n contributions G_delta(x)."""
    execute("renewal-scan", spec, out, seed, budget_mb, threads, verbose)


@app.command("small-n-table")
def small_n_table(
    spec: Path = SPEC_OPTION,
    out: Path = OUT_OPTION,
    seed: int = SEED_OPTION,
    budget_mb: float = BUDGET_OPTION,
    threads: int = THREADS_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Table of x F̄(x) G_delta(x) over x and delta, with an optional lower bound."""
    execute("small-n-table", spec, out, seed, budget_mb, threads, verbose)


@app.command("criteria")
def criteria(
    spec: Path = SPEC_OPTION,
    out: Path = OUT_OPTION,
    seed: int = SEED_OPTION,
    budget_mb: float = BUDGET_OPTION,
    threads: int = THREADS_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Evaluate the sufficient conditions and write a criterion report."""
    execute("criteria", spec, out, seed, budget_mb, threads, verbose)


@app.command("lld-check")
def lld_check(
    spec: Path = SPEC_OPTION,
    out: Path = OUT_OPTION,
    seed: int = SEED_OPTION,
    budget_mb: float = BUDGET_OPTION,
    threads: int = THREADS_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Local large deviation bound, tilting identity and the R function."""
    execute("lld-check", spec, out, seed, budget_mb, threads, verbose)


@app.command("ladder")
def ladder(
    spec: Path = SPEC_OPTION,
    out: Path = OUT_OPTION,
    seed: int = SEED_OPTION,
    budget_mb: float = BUDGET_OPTION,
    threads: int = THREADS_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Ladder heights, Wiener-Hopf residuals and the ladder renewal estimate."""
    execute("ladder", spec, out, seed, budget_mb, threads, verbose)


@app.command("infdiv")
def infdiv(
    spec: Path = SPEC_OPTION,
    out: Path = OUT_OPTION,
    seed: int = SEED_OPTION,
    budget_mb: float = BUDGET_OPTION,
    threads: int = THREADS_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Renewal estimate of a compound-Poisson walk built from a Lévy measure."""
    execute("infdiv", spec, out, seed, budget_mb, threads, verbose)


@app.command("probe")
def probe(
    spec: Path = SPEC_OPTION,
    out: Path = OUT_OPTION,
    seed: int = SEED_OPTION,
    budget_mb: float = BUDGET_OPTION,
    threads: int = THREADS_OPTION,
    verbose: bool = VERBOSE_OPTION,
):
    """Monte Carlo probabilities of the big-jump events."""
    execute("probe", spec, out, seed, budget_mb, threads, verbose)


@app.command("validate")
def validate(
    spec: Path = typer.Argument(..., help="JobSpec JSON file", exists=True, readable=True),
):
    """Validate a job spec and its distribution without running the task."""
    try:
        job = _load(None, spec, None)
        base = build_distribution(job.distribution)
    except ValidationFailure as e:
        raise _invalid(e)
    except RenewalLabError as e:
        console.print(f"[red]Validation failed: {e}[/red]")
        raise typer.Exit(EXIT_FAILURE)

    description = base.describe()
    console.print("[green]Spec is valid![/green]")
    console.print(f"  Task: {job.task}")
    console.print(f"  Stochastic: {'yes' if job.stochastic else 'no'}")
    console.print(f"  Seed: {job.seed if job.seed is not None else '-'}")
    console.print(f"  Law: {description['kind']} (h = {base.h:g}, a = {base.a:g})")
    console.print(f"  Window: [{base.i_min}, {base.i_max}] ({base.masses.size:,} points)")
    if base.right_tail is not None:
        tail = base.right_tail
        console.print(f"  Right tail: alpha = {tail.alpha:g}, scale = {tail.scale:.6g}")
    if job.overrides:
        console.print(f"  Overrides: {', '.join(sorted(job.overrides))}")
