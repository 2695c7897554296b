"""SVG figures for band paths and Wannier mass profiles."""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
from matplotlib import pyplot  # noqa: E402

from .wannier import MASS_FLOOR, DecayFit, WannierFunction  # noqa: E402

logger = logging.getLogger(__name__)


def plot_band_path(table: np.ndarray, dimension: int, path: Path) -> Path:
    """Energies against cumulative path length"""
    path = Path(path)
    kappas = table[:, :dimension]
    steps = np.linalg.norm(np.diff(kappas, axis=0), axis=1)
    length = np.concatenate([[0.0], np.cumsum(steps)])
    fig, ax = pyplot.subplots(figsize=(6, 4.5))
    ax.plot(length, table[:, dimension:], color="tab:blue")
    ax.set_xlabel("path length (reduced momentum)")
    ax.set_ylabel("energy")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    pyplot.close(fig)
    logger.debug("band plot written to %s", path)
    return path


def plot_masses(w: WannierFunction, fit: DecayFit, path: Path) -> Path:
    """Per-cell mass on a log scale with the fitted exponential"""
    path = Path(path)
    distances = w.distances.reshape(-1)
    masses = np.maximum(w.masses.reshape(-1), MASS_FLOOR)
    fig, ax = pyplot.subplots(figsize=(6, 4.5))
    ax.semilogy(distances, masses, "o", markersize=3, label="cell mass")
    if not fit.capped:
        r = np.linspace(fit.r_min, fit.r_max, 50)
        reference = np.max(masses[np.floor(distances + 1e-9) == fit.r_min])
        ax.semilogy(r, reference * np.exp(-fit.rate * (r - fit.r_min)), "-", label=f"b = {fit.rate:.3f}")
    ax.set_xlabel("|gamma|")
    ax.set_ylabel("mass")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    pyplot.close(fig)
    return path
