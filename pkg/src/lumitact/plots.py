"""Matplotlib figure output for the CLI report paths.

Figures are written to files (SVG by default) next to the delimited
output they accompany; nothing here opens a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .spectra import FitResult, SampledSpectrum, sample_model


def plot_fit_overlay(
    measured: SampledSpectrum,
    fit: FitResult,
    path: str | Path,
    title: str = "Spectral fit",
) -> None:
    """Measured samples vs fitted lobe, one panel."""
    fitted = sample_model(fit.params, measured)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(measured.wavelengths, measured.values, "o", ms=4, label="measured",
            color="#444444")
    ax.plot(fitted.wavelengths, fitted.values, "-", lw=1.6, label="fitted model",
            color="#c23b22")
    ax.set_xlabel("wavelength (nm)")
    ax.set_ylabel("relative value")
    p = fit.params
    ax.set_title(
        f"{title}  (peak {p.lambda0:.1f} nm, width {p.gamma:.1f} nm, "
        f"residual {fit.residual:.2e})",
        fontsize=9,
    )
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_sweep(
    values: np.ndarray,
    intensities: np.ndarray,
    path: str | Path,
    xlabel: str = "illumination angle (deg)",
    ylabel: str = "probe intensity",
) -> None:
    """Line plot of a design sweep."""
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(values, intensities, "o-", lw=1.4, ms=4, color="#1f5fa8")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_uniformity(
    labels: list[str],
    cvs: list[float],
    path: str | Path,
) -> None:
    """Bar chart of luminance coefficient of variation per lighting config."""
    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    ax.bar(labels, cvs, color=["#1f5fa8", "#c23b22"][: len(labels)], width=0.5)
    ax.set_ylabel("luminance CV over pad (lower = more uniform)")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
