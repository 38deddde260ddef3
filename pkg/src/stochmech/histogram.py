"""Residency accumulation, density normalization and the noise metric.

A histogram instance is single-writer.  Instances with identical geometry
merge by elementwise count addition, which is how replicate results are
combined.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DegenerateInputError
from .util import fmt_float, write_csv


class ResidencyHistogram:
    """Binned occupancy counts over [-L, +L] plus an out-of-range counter.

    Bin j covers [-L + j*dx, -L + (j+1)*dx), left-closed right-open, with
    the single point x = +L folded into the last bin.  Every recorded
    position increments exactly one counter, so
    sum(counts) + out_of_range == total_recorded always holds.
    """

    def __init__(self, n_bins: int = 128, half_width: float = 5.0):
        if n_bins < 2:
            raise ConfigurationError(f"n_bins must be >= 2, got {n_bins}")
        if not (half_width > 0.0 and math.isfinite(half_width)):
            raise ConfigurationError(f"half_width must be positive, got {half_width!r}")
        self.n_bins = int(n_bins)
        self.half_width = float(half_width)
        self.counts = np.zeros(self.n_bins, dtype=np.int64)
        self.out_of_range = 0
        self.total_recorded = 0

    @property
    def bin_width(self) -> float:
        return 2.0 * self.half_width / self.n_bins

    @property
    def centers(self) -> np.ndarray:
        """Bin centers: left edge shifted by half a bin width."""
        left = -self.half_width + self.bin_width * np.arange(self.n_bins)
        return left + 0.5 * self.bin_width

    def bin_index(self, q: float) -> int:
        """Covering bin for an in-range position (caller checks range)."""
        j = int((q + self.half_width) / self.bin_width)
        return min(j, self.n_bins - 1)

    def record(self, q: float) -> None:
        """Count one position; NaN/inf and out-of-domain go to out_of_range."""
        self.total_recorded += 1
        if math.isfinite(q) and -self.half_width <= q <= self.half_width:
            self.counts[self.bin_index(q)] += 1
        else:
            self.out_of_range += 1

    def record_many(self, qs) -> None:
        qs = np.asarray(qs, dtype=float)
        in_range = np.isfinite(qs) & (np.abs(qs) <= self.half_width)
        idx = ((qs[in_range] + self.half_width) / self.bin_width).astype(np.int64)
        np.minimum(idx, self.n_bins - 1, out=idx)
        np.add.at(self.counts, idx, 1)
        self.total_recorded += qs.size
        self.out_of_range += int(qs.size - in_range.sum())

    def copy(self) -> "ResidencyHistogram":
        dup = ResidencyHistogram(self.n_bins, self.half_width)
        dup.counts = self.counts.copy()
        dup.out_of_range = self.out_of_range
        dup.total_recorded = self.total_recorded
        return dup

    def same_geometry(self, other: "ResidencyHistogram") -> bool:
        return self.n_bins == other.n_bins and self.half_width == other.half_width


def merge(a: ResidencyHistogram, b: ResidencyHistogram) -> ResidencyHistogram:
    """Combine two histograms of identical geometry (associative, commutative)."""
    if not a.same_geometry(b):
        raise ConfigurationError("cannot merge histograms with different geometry")
    out = a.copy()
    out.counts += b.counts
    out.out_of_range += b.out_of_range
    out.total_recorded += b.total_recorded
    return out


@dataclass(frozen=True)
class NormalizedDensity:
    """Probability density at the bin centers, unit-normalized on [-L, +L]."""

    centers: np.ndarray
    density: np.ndarray
    quadrature_used: str  # "simpson" or "trapezoid"
    half_width: float
    bin_width: float

    @property
    def n_bins(self) -> int:
        return self.density.size


def quadrature_weights(n_bins: int, half_width: float):
    """Composite-rule weights for the n density values spanning [-L, +L].

    Simpson's rule for an odd value count, trapezoid for an even one.  The
    weights use spacing 2L/(n-1) so that the rule integrates over the full
    domain; a constant density then normalizes to exactly 1/(2L).
    """
    if n_bins < 2:
        raise ConfigurationError(f"need at least 2 bins, got {n_bins}")
    h = 2.0 * half_width / (n_bins - 1)
    if n_bins % 2 == 1:
        w = np.full(n_bins, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        return w * (h / 3.0), "simpson"
    w = np.ones(n_bins)
    w[0] = w[-1] = 0.5
    return w * h, "trapezoid"


def normalize(hist: ResidencyHistogram) -> NormalizedDensity:
    """Scale counts so the parity-selected quadrature rule integrates to 1.

    The histogram itself is left untouched; normalization always produces a
    new value (intermediate checkpoints normalize a copy of the counts).
    """
    weights, rule = quadrature_weights(hist.n_bins, hist.half_width)
    z = float(weights @ hist.counts)
    if z <= 0.0:
        raise DegenerateInputError("histogram has no in-range counts to normalize")
    return NormalizedDensity(
        centers=hist.centers,
        density=hist.counts / z,
        quadrature_used=rule,
        half_width=hist.half_width,
        bin_width=hist.bin_width,
    )


def solution_noise(density: NormalizedDensity, oracle) -> float:
    """Mean squared pointwise gap between the density and an oracle density.

    The oracle is evaluated at the half-bin-shifted centers, matching how
    the normalized histogram is positioned.
    """
    ref = np.asarray(oracle(density.centers), dtype=float)
    diff = ref - density.density
    return float(diff @ diff) / density.n_bins


def checkpoint_schedule(n_steps: int, points_per_decade: int = 1):
    """Logarithmically spaced iteration counts from 10 to n_steps inclusive.

    Values are int(10 ** (1 + k / points_per_decade)) (truncated),
    deduplicated; n_steps itself is always the final entry.
    """
    if n_steps < 10:
        raise ConfigurationError(f"n_steps must be >= 10, got {n_steps}")
    if points_per_decade < 1:
        raise ConfigurationError("points_per_decade must be >= 1")
    points = []
    k = 0
    while True:
        value = int(10.0 ** (1.0 + k / points_per_decade) + 1e-9)
        if value > n_steps:
            break
        if not points or value != points[-1]:
            points.append(value)
        k += 1
    if not points or points[-1] != n_steps:
        points.append(n_steps)
    return points


def write_density_csv(path, density: NormalizedDensity, hist: ResidencyHistogram, oracle) -> None:
    """CSV export: x_center,count,density,oracle_density per bin."""
    ref = np.asarray(oracle(density.centers), dtype=float)
    rows = [
        (fmt_float(x), str(int(c)), fmt_float(d), fmt_float(o))
        for x, c, d, o in zip(density.centers, hist.counts, density.density, ref)
    ]
    write_csv(path, ["x_center", "count", "density", "oracle_density"], rows)


def write_noise_csv(path, series) -> None:
    """CSV export of an (iteration, sigma_n) series."""
    rows = [(str(int(it)), fmt_float(s)) for it, s in series]
    write_csv(path, ["iteration", "sigma_n"], rows)
