"""Command-line front end.

Run with: bloch-wannier --help
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional

import typer
from pydantic import ValidationError
from typer.colors import GREEN, RED, YELLOW

from . import __version__
from .chern import calibrate_chern2, save_calibration
from .config import RunConfig, describe_errors, load_config
from .errors import BlochWannierError, ConfigError
from .pipeline import run_pipeline

app = typer.Typer(help="Bloch bundles, Chern invariants and Wannier functions of periodic magnetic Schroedinger operators.")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def version_callback(value: bool):
    if value:
        typer.echo(f"bloch-wannier version {__version__}")
        raise typer.Exit()


@app.callback()
def main_callback(
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log at DEBUG level"),
    version: bool = typer.Option(
        False,
        "--version",
        callback=version_callback,
        is_eager=True,
        help="Show version and exit",
    ),
):
    """Global options shared by every subcommand."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, force=True)


def resolve_config(
    pipeline: str,
    model: Optional[Path],
    config: Optional[Path],
    out: Optional[Path],
    threads: Optional[int],
    cutoff: Optional[int],
    grid: Optional[List[int]],
) -> RunConfig:
    """Config file values with command-line flags on top"""
    data = {} if config is None else load_config(config).model_dump(exclude_unset=True)
    overrides = {"model": model, "out": out, "threads": threads, "cutoff": cutoff, "grid": grid or None}
    data.update({key: value for key, value in overrides.items() if value is not None})
    data["pipeline"] = pipeline
    if "model" not in data:
        raise ConfigError("model: give --model or a config file with a model entry")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {describe_errors(e)}") from e


def _run(pipeline: str, model, config, out, threads, cutoff, grid) -> None:
    try:
        run_config = resolve_config(pipeline, model, config, out, threads, cutoff, grid)
        report = run_pipeline(run_config)
    except BlochWannierError as exc:
        typer.secho(f"Error: {exc}", fg=RED)
        raise typer.Exit(exc.exit_code) from exc
    if report.passed:
        typer.secho(f"{pipeline}: all checks passed", fg=GREEN)
    else:
        failed = ", ".join(c.name for c in report.checks if not c.passed)
        typer.secho(f"{pipeline}: failed checks: {failed}", fg=YELLOW)


ModelOption = typer.Option(None, "--model", "-m", help="Model file (JSON)")
ConfigOption = typer.Option(None, "--config", "-c", help="Run configuration (JSON)")
OutOption = typer.Option(None, "--out", "-o", help="Output directory")
ThreadsOption = typer.Option(None, "--threads", min=1, help="Threads for the k-point sweeps")
CutoffOption = typer.Option(None, "--cutoff", min=1, help="Plane-wave cutoff N")
GridOption = typer.Option([], "--grid", help="Grid points per axis, repeat once per axis")


@app.command()
def validate(
    model: Optional[Path] = ModelOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    threads: Optional[int] = ThreadsOption,
    cutoff: Optional[int] = CutoffOption,
    grid: List[int] = GridOption,
):
    """Check the lattice, the zero-flux condition and the field of a model."""
    _run("validate", model, config, out, threads, cutoff, grid)


@app.command()
def bands(
    model: Optional[Path] = ModelOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    threads: Optional[int] = ThreadsOption,
    cutoff: Optional[int] = CutoffOption,
    grid: List[int] = GridOption,
):
    """Band energies on the grid (and along a path) with the gap report."""
    _run("bands", model, config, out, threads, cutoff, grid)


@app.command()
def symmetry(
    model: Optional[Path] = ModelOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    threads: Optional[int] = ThreadsOption,
    cutoff: Optional[int] = CutoffOption,
    grid: List[int] = GridOption,
):
    """Time-reversal, parity, spectrum and gauge-covariance residuals."""
    _run("symmetry", model, config, out, threads, cutoff, grid)


@app.command()
def chern(
    model: Optional[Path] = ModelOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    threads: Optional[int] = ThreadsOption,
    cutoff: Optional[int] = CutoffOption,
    grid: List[int] = GridOption,
):
    """First and second Chern numbers and the triviality verdict."""
    _run("chern", model, config, out, threads, cutoff, grid)


@app.command()
def wannier(
    model: Optional[Path] = ModelOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    threads: Optional[int] = ThreadsOption,
    cutoff: Optional[int] = CutoffOption,
    grid: List[int] = GridOption,
):
    """Global Bloch gauge, Wannier functions and their decay rate."""
    _run("wannier", model, config, out, threads, cutoff, grid)


@app.command()
def tpuv(
    model: Optional[Path] = ModelOption,
    config: Optional[Path] = ConfigOption,
    out: Optional[Path] = OutOption,
    threads: Optional[int] = ThreadsOption,
    cutoff: Optional[int] = CutoffOption,
    grid: List[int] = GridOption,
):
    """Trace per unit volume of the band projector, Bloch and supercell estimates."""
    _run("tpuv", model, config, out, threads, cutoff, grid)


@app.command()
def calibrate(
    grid_size: int = typer.Option(12, "--grid-size", min=6, help="Points per axis of the 4D reference grid"),
    mass: float = typer.Option(3.0, "--mass", help="Mass of the Dirac reference field"),
    output: Path = typer.Option(Path("calibration.json"), "--output", help="Where to write (s, nu)"),
):
    """Fix the sign and normalization of the curvature second Chern number."""
    try:
        calibration = calibrate_chern2(grid_size, mass)
    except BlochWannierError as exc:
        typer.secho(f"Error: {exc}", fg=RED)
        raise typer.Exit(exc.exit_code) from exc
    save_calibration(calibration, output)
    typer.echo(f"s = {calibration.s}, nu = {calibration.nu:.10g} written to {output}")


def main():
    try:
        app()
    except BlochWannierError as exc:
        typer.secho(f"Error: {exc}", fg=RED)
        sys.exit(exc.exit_code)


if __name__ == "__main__":
    main()
