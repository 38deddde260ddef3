"""Study orchestration: convergence, time-step sweeps and lifetime scans.

Each study runs an ensemble of independently seeded replicates (stream
index = seed_base offset) and aggregates them into mean / population-std
statistics.  Replicates may run on a thread pool; results are gathered in
submission order, so outcomes never depend on completion order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .field import CollocationGrid, DriftField, solve_field
from .histogram import (
    ResidencyHistogram,
    checkpoint_schedule,
    merge,
    normalize,
)
from .langevin import (
    RngStream,
    StepParams,
    TrajectoryState,
    init_position,
    run_fixed,
    run_until_escape,
)
from .physics import EnergySpec, PhysicalParams, ground_state_density
from .util import fmt_float, write_csv

# The time-step domain studied for convergence sweeps.
DT_SWEEP_RANGE = (0.001, 0.5)


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved inputs for one study.

    init_mode and interpolation_mode left as None pick the per-study
    defaults: recording studies use a uniform start and the global
    interpolant, lifetime studies start near the minimum and use the
    local 3-point interpolant.
    """

    seed_base: int
    params: PhysicalParams = PhysicalParams()
    dt: float = 0.005
    n_steps: int = 10_000_000
    n_bins: int = 128
    n_field: int = 129
    delta_e: float = 0.0
    replicates: int = 4
    tau_max: float = 1.0e4
    escape_radius: float | None = None
    init_mode: str | None = None
    interpolation_mode: str | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigurationError(f"replicates must be >= 1, got {self.replicates}")
        if self.n_steps < 1:
            raise ConfigurationError(f"n_steps must be >= 1, got {self.n_steps}")
        if not (self.dt > 0.0):
            raise ConfigurationError(f"dt must be positive, got {self.dt!r}")
        if not (self.tau_max > 0.0):
            raise ConfigurationError(f"tau_max must be positive, got {self.tau_max!r}")
        if self.init_mode not in (None, "uniform_full", "near_minimum"):
            raise ConfigurationError(f"unknown init mode {self.init_mode!r}")
        if self.interpolation_mode not in (None, "global", "local3", "analytic"):
            raise ConfigurationError(
                f"unknown interpolation mode {self.interpolation_mode!r}"
            )

    @property
    def resolved_escape_radius(self) -> float:
        if self.escape_radius is not None:
            return self.escape_radius
        return 5.0 * self.params.half_width


@dataclass(frozen=True)
class ReplicateStats:
    """Per-replicate scalar values with their mean and population std."""

    values: np.ndarray

    @classmethod
    def from_values(cls, values) -> "ReplicateStats":
        return cls(values=np.asarray(values, dtype=float))

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        return float(np.std(self.values))


def _map_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def make_drift(config: ExperimentConfig, delta_e: float, mode: str) -> DriftField:
    """Drift evaluator for a study: analytic, or solved + interpolated."""
    if mode == "analytic":
        return DriftField.analytic(config.params)
    grid = CollocationGrid(config.n_field, config.params.half_width)
    table = solve_field(config.params, EnergySpec.for_params(config.params, delta_e), grid)
    if mode == "global":
        return DriftField.global_interpolant(table)
    if mode == "local3":
        return DriftField.local3(table)
    raise ConfigurationError(f"unknown interpolation mode {mode!r}")


def run_recording_replicate(
    config: ExperimentConfig,
    drift: DriftField,
    n_bins: int,
    stream_index: int,
    checkpoints,
):
    """One seeded fixed-length run; returns the FixedRunResult."""
    rng = RngStream(config.seed_base, stream_index)
    q0 = init_position(rng, config.init_mode or "uniform_full", config.params)
    sink = ResidencyHistogram(n_bins, config.params.half_width)
    oracle = lambda x: ground_state_density(config.params, x)
    return run_fixed(
        TrajectoryState(q0),
        drift,
        StepParams.from_physics(config.params, config.dt),
        config.n_steps,
        sink,
        checkpoints,
        rng=rng,
        oracle=oracle,
    )


def run_lifetime_replicate(
    config: ExperimentConfig,
    drift: DriftField,
    dt: float,
    stream_index: int,
) -> float:
    rng = RngStream(config.seed_base, stream_index)
    q0 = init_position(rng, config.init_mode or "near_minimum", config.params)
    return run_until_escape(
        TrajectoryState(q0),
        drift,
        StepParams.from_physics(config.params, dt),
        config.tau_max,
        config.resolved_escape_radius,
        rng=rng,
    )


# ---------------------------------------------------------------------------
# Convergence vs spatial resolution
# ---------------------------------------------------------------------------


@dataclass
class ConvergenceRow:
    n_bins: int
    stream_indices: list
    stats: ReplicateStats  # final solution noise per replicate
    merged_histogram: ResidencyHistogram


@dataclass
class ConvergenceResult:
    config: ExperimentConfig
    rows: list


def convergence_study(config: ExperimentConfig, n_bins_list, threads: int = 1) -> ConvergenceResult:
    """Final solution noise vs histogram resolution, over seeded replicates."""
    n_bins_list = [int(n) for n in n_bins_list]
    if not n_bins_list:
        raise ConfigurationError("n_bins list must be nonempty")
    mode = config.interpolation_mode or "global"
    drift = make_drift(config, config.delta_e, mode)
    checkpoints = checkpoint_schedule(config.n_steps)

    rows = []
    stream = 0
    for n_bins in n_bins_list:
        indices = list(range(stream, stream + config.replicates))
        stream += config.replicates
        results = _map_ordered(
            lambda idx: run_recording_replicate(config, drift, n_bins, idx, checkpoints),
            indices,
            threads,
        )
        merged = results[0].histogram
        for res in results[1:]:
            merged = merge(merged, res.histogram)
        rows.append(
            ConvergenceRow(
                n_bins=n_bins,
                stream_indices=indices,
                stats=ReplicateStats.from_values([r.final_noise for r in results]),
                merged_histogram=merged,
            )
        )
    return ConvergenceResult(config=config, rows=rows)


# ---------------------------------------------------------------------------
# Convergence vs time increment
# ---------------------------------------------------------------------------


@dataclass
class DtSweepRow:
    dt: float
    stream_indices: list
    iterations: np.ndarray
    sigma_mean: np.ndarray  # mean noise at each checkpoint
    sigma_std: np.ndarray
    final: ReplicateStats


@dataclass
class DtSweepResult:
    config: ExperimentConfig
    rows: list
    fit_amplitude: float
    fit_exponent: float


def dt_sweep(config: ExperimentConfig, dt_list, threads: int = 1) -> DtSweepResult:
    """Noise-vs-iteration curves and converged noise for each time step."""
    dt_list = [float(dt) for dt in dt_list]
    if not dt_list:
        raise ConfigurationError("dt list must be nonempty")
    lo, hi = DT_SWEEP_RANGE
    for dt in dt_list:
        if not (lo <= dt <= hi):
            raise ConfigurationError(
                f"dt {dt!r} outside the studied range [{lo}, {hi}]"
            )
    mode = config.interpolation_mode or "global"
    drift = make_drift(config, config.delta_e, mode)
    checkpoints = checkpoint_schedule(config.n_steps)

    rows = []
    stream = 0
    for dt in dt_list:
        cfg = replace(config, dt=dt)
        indices = list(range(stream, stream + config.replicates))
        stream += config.replicates
        results = _map_ordered(
            lambda idx: run_recording_replicate(cfg, drift, config.n_bins, idx, checkpoints),
            indices,
            threads,
        )
        sigmas = np.array([[s for _, s in r.noise_series] for r in results])
        rows.append(
            DtSweepRow(
                dt=dt,
                stream_indices=indices,
                iterations=np.asarray(checkpoints, dtype=np.int64),
                sigma_mean=sigmas.mean(axis=0),
                sigma_std=sigmas.std(axis=0),
                final=ReplicateStats.from_values(sigmas[:, -1]),
            )
        )
    amplitude, exponent = powerlaw_fit([(row.dt, row.final.mean) for row in rows])
    return DtSweepResult(
        config=config, rows=rows, fit_amplitude=amplitude, fit_exponent=exponent
    )


def powerlaw_fit(points):
    """Least-squares line in log-log space; returns (amplitude, exponent)."""
    points = list(points)
    if len(points) < 2:
        raise ConfigurationError("power-law fit needs at least 2 points")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise ConfigurationError("power-law fit needs strictly positive data")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(np.exp(intercept)), float(slope)


# ---------------------------------------------------------------------------
# Lifetime scans
# ---------------------------------------------------------------------------


@dataclass
class LifetimeRow:
    key: float  # the swept value: dt or delta_e
    stream_indices: list
    stats: ReplicateStats


@dataclass
class LifetimeResult:
    config: ExperimentConfig
    swept: str  # "dt" or "delta_e"
    rows: list
    grand: ReplicateStats  # pooled over every replicate of every row


def _lifetime_scan(config, keys, drift_for_key, dt_for_key, threads):
    mode = config.interpolation_mode or "local3"
    rows = []
    pooled = []
    stream = 0
    for key in keys:
        drift = drift_for_key(key, mode)
        dt = dt_for_key(key)
        indices = list(range(stream, stream + config.replicates))
        stream += config.replicates
        taus = _map_ordered(
            lambda idx: run_lifetime_replicate(config, drift, dt, idx),
            indices,
            threads,
        )
        pooled.extend(taus)
        rows.append(
            LifetimeRow(
                key=key,
                stream_indices=indices,
                stats=ReplicateStats.from_values(taus),
            )
        )
    return rows, ReplicateStats.from_values(pooled)


def lifetime_vs_dt(config: ExperimentConfig, dt_list, threads: int = 1) -> LifetimeResult:
    """Lifetime statistics across time increments at a fixed nonzero defect."""
    dt_list = [float(dt) for dt in dt_list]
    if not dt_list:
        raise ConfigurationError("dt list must be nonempty")
    if config.delta_e == 0.0:
        raise ConfigurationError("lifetime-vs-dt needs a nonzero energy defect")
    mode = config.interpolation_mode or "local3"
    drift = make_drift(config, config.delta_e, mode)
    rows, grand = _lifetime_scan(
        config, dt_list, lambda key, m: drift, lambda key: key, threads
    )
    return LifetimeResult(config=config, swept="dt", rows=rows, grand=grand)


def lifetime_vs_defect(config: ExperimentConfig, de_list, threads: int = 1) -> LifetimeResult:
    """Lifetime statistics across energy defects at a fixed time increment."""
    de_list = [float(de) for de in de_list]
    if not de_list:
        raise ConfigurationError("defect list must be nonempty")
    rows, grand = _lifetime_scan(
        config,
        de_list,
        lambda key, m: make_drift(config, key, m),
        lambda key: config.dt,
        threads,
    )
    return LifetimeResult(config=config, swept="delta_e", rows=rows, grand=grand)


# ---------------------------------------------------------------------------
# CSV exports (one file per reproduced figure)
# ---------------------------------------------------------------------------


def write_fig1b_csv(path, result: ConvergenceResult) -> None:
    rows = [
        (str(row.n_bins), fmt_float(row.stats.mean), fmt_float(row.stats.std))
        for row in result.rows
    ]
    write_csv(path, ["n_bins", "sigma_mean", "sigma_std"], rows)


def write_fig2b_csv(path, result: DtSweepResult) -> None:
    rows = []
    for row in result.rows:
        for it, mean, std in zip(row.iterations, row.sigma_mean, row.sigma_std):
            rows.append((fmt_float(row.dt), str(int(it)), fmt_float(mean), fmt_float(std)))
    write_csv(path, ["dt", "iteration", "sigma_mean", "sigma_std"], rows)


def write_fig3_csv(path, result: DtSweepResult) -> None:
    rows = [
        (
            fmt_float(row.dt),
            fmt_float(row.final.mean),
            fmt_float(row.final.std),
            fmt_float(result.fit_amplitude),
            fmt_float(result.fit_exponent),
        )
        for row in result.rows
    ]
    write_csv(path, ["dt", "sigma_mean", "sigma_std", "fit_a", "fit_b"], rows)


def write_fig4_csv(path, defects, tables) -> None:
    from .util import field_value_cell

    rows = []
    for de, table in zip(defects, tables):
        for x, v, d in zip(table.grid.nodes, table.values, table.diverged):
            rows.append((fmt_float(de), fmt_float(x), field_value_cell(v, d), "1" if d else "0"))
    write_csv(path, ["delta_e", "x", "v", "diverged"], rows)


def write_fig5a_csv(path, result: LifetimeResult) -> None:
    rows = [
        (fmt_float(row.key), fmt_float(row.stats.mean), fmt_float(row.stats.std))
        for row in result.rows
    ]
    write_csv(path, ["dt", "tau_mean", "tau_std"], rows)


def write_fig5b_csv(path, result: LifetimeResult) -> None:
    rows = [
        (fmt_float(row.key), fmt_float(row.stats.mean), fmt_float(row.stats.std))
        for row in result.rows
    ]
    write_csv(path, ["delta_e", "tau_mean", "tau_std"], rows)


def write_replicates_csv(path, key_name: str, entries) -> None:
    """Per-replicate values; entries are (key, stream_indices, values) triples."""
    out = []
    for key, indices, values in entries:
        key_cell = str(key) if isinstance(key, int) else fmt_float(key)
        for idx, value in zip(indices, values):
            out.append((key_cell, str(idx), fmt_float(value)))
    write_csv(path, [key_name, "stream_index", "value"], out)


def write_density_exports(out_dir, result: ConvergenceResult):
    """Merged-density CSV per n_bins row; returns the written file names."""
    from .histogram import write_density_csv

    names = []
    oracle = lambda x: ground_state_density(result.config.params, x)
    for row in result.rows:
        density = normalize(row.merged_histogram)
        name = f"density_n{row.n_bins}.csv"
        write_density_csv(out_dir / name, density, row.merged_histogram, oracle)
        names.append(name)
    return names
