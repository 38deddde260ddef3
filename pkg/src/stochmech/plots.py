"""Figure rendering for the report path.

Each study command writes a PNG next to its CSV so results can be eyeballed
without a separate plotting step.  All functions take a target path and
return None; they never show interactive windows.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _new_axes(xlabel, ylabel):
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_field_figure(path, defects, tables):
    """Solved drift fields, one curve per energy defect."""
    fig, ax = _new_axes("x", "v(x)")
    for de, table in zip(defects, tables):
        x = table.grid.nodes
        v = np.where(table.diverged, np.nan, table.values)
        ax.plot(x, v, lw=1.2, label=f"dE = {de:+g}")
    ax.set_ylim(-12, 12)
    ax.legend(fontsize=8)
    _finish(fig, path)


def save_density_figure(path, density, oracle):
    """Normalized residency density against the reference density."""
    fig, ax = _new_axes("x", "probability density")
    x = density.centers
    ax.plot(x, oracle(x), "k-", lw=1.5, label="reference")
    ax.plot(x, density.density, "o", ms=3, alpha=0.7, label="simulation")
    ax.legend()
    _finish(fig, path)


def save_densities_figure(path, rows, oracle):
    """Overlaid merged densities from a convergence study (one per n_bins)."""
    from .histogram import normalize

    fig, ax = _new_axes("x", "probability density")
    xs = np.linspace(rows[0].merged_histogram.half_width * -1,
                     rows[0].merged_histogram.half_width, 400)
    ax.plot(xs, oracle(xs), "k-", lw=1.5, label="reference")
    for row in rows:
        density = normalize(row.merged_histogram)
        ax.plot(density.centers, density.density, "o", ms=2.5, alpha=0.6,
                label=f"n = {row.n_bins}")
    ax.legend(fontsize=8)
    _finish(fig, path)


def save_noise_series_figure(path, series):
    """Single-run noise-vs-iteration curve."""
    fig, ax = _new_axes("iteration", "solution noise")
    its = [it for it, _ in series]
    sig = [s for _, s in series]
    ax.loglog(its, sig, "o-", ms=3)
    _finish(fig, path)


def save_convergence_figure(path, result):
    """Final noise vs histogram resolution (mean with std band)."""
    fig, ax = _new_axes("number of bins", "solution noise")
    n = [row.n_bins for row in result.rows]
    mean = np.array([row.stats.mean for row in result.rows])
    std = np.array([row.stats.std for row in result.rows])
    ax.fill_between(n, mean - std, mean + std, alpha=0.25)
    ax.plot(n, mean, "o-")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    _finish(fig, path)


def save_dt_curves_figure(path, result):
    """Noise-vs-iteration curves, one per time step."""
    fig, ax = _new_axes("iteration", "solution noise")
    for row in result.rows:
        ax.loglog(row.iterations, row.sigma_mean, "-", lw=1.2, label=f"dt = {row.dt:g}")
        ax.fill_between(row.iterations, row.sigma_mean - row.sigma_std,
                        row.sigma_mean + row.sigma_std, alpha=0.2)
    ax.legend(fontsize=8)
    _finish(fig, path)


def save_final_noise_figure(path, result):
    """Converged noise vs time step with the power-law fit."""
    fig, ax = _new_axes("dt", "converged solution noise")
    dts = np.array([row.dt for row in result.rows])
    mean = np.array([row.final.mean for row in result.rows])
    std = np.array([row.final.std for row in result.rows])
    ax.fill_between(dts, np.maximum(mean - std, 1e-12), mean + std, alpha=0.25)
    ax.loglog(dts, mean, "o")
    xs = np.geomspace(dts.min(), dts.max(), 100)
    ax.loglog(xs, result.fit_amplitude * xs ** result.fit_exponent, "k--",
              label=f"{result.fit_amplitude:.3g} dt^{result.fit_exponent:.2f}")
    ax.legend()
    _finish(fig, path)


def save_lifetime_figure(path, result, xlabel, log_x=False):
    """Lifetime vs the swept quantity (mean with std band)."""
    fig, ax = _new_axes(xlabel, "lifetime")
    keys = np.array([row.key for row in result.rows])
    mean = np.array([row.stats.mean for row in result.rows])
    std = np.array([row.stats.std for row in result.rows])
    ax.fill_between(keys, mean - std, mean + std, alpha=0.25)
    ax.plot(keys, mean, "o-")
    ax.axhline(result.grand.mean, ls="--", color="k", alpha=0.6, label="grand mean")
    if log_x:
        ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend()
    _finish(fig, path)
