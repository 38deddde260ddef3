"""Single-walker stochastic stepping and run drivers.

The update rule is q' = q + v(q) dt + xi sqrt(2 D dt) with xi a standard
normal variate.  A walker is strictly sequential; parallelism lives at the
replicate level, each replicate owning its own RngStream, state and
histogram sink.

Hot loops run in numba kernels fed with pre-drawn normal variates; the
chunked draws produce the same stream as scalar draws, so the pure-Python
path (used with arbitrary drift callables) is bit-for-bit compatible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConfigurationError
from .field import DriftField, drift_eval
from .histogram import ResidencyHistogram, normalize, solution_noise
from .physics import PhysicalParams

# Positions are pre-drawn in chunks of this many variates.
NOISE_CHUNK = 1 << 20

# A diverged drift ejects the walker to this multiple of the domain
# half-width (guaranteed outside the escape radius of 5 L).
EJECT_FACTOR = 10.0


class RngStream:
    """Deterministic per-replicate random stream.

    Stream k of a run is seeded with seed_base + k through a PCG64
    generator (period 2^128, independent streams for distinct seeds).
    Identical (seed, stream_index) pairs reproduce the variate sequence
    bit-for-bit; wall-clock seeding is deliberately not offered.
    """

    def __init__(self, seed: int, stream_index: int = 0):
        self.seed = int(seed)
        self.stream_index = int(stream_index)
        self.generator = np.random.default_rng(self.seed + self.stream_index)

    def normal(self) -> float:
        return float(self.generator.standard_normal())

    def normals(self, n: int) -> np.ndarray:
        return self.generator.standard_normal(n)

    def uniform(self) -> float:
        return float(self.generator.random())

    def uniforms(self, n: int) -> np.ndarray:
        return self.generator.random(n)


@dataclass(frozen=True)
class TrajectoryState:
    """Walker position and step count; elapsed time is step_count * dt."""

    position: float
    step_count: int = 0

    def elapsed(self, dt: float) -> float:
        return self.step_count * dt


@dataclass(frozen=True)
class StepParams:
    """Time increment and the precomputed noise amplitude sqrt(2 D dt)."""

    dt: float
    diffusion: float
    noise_amplitude: float = field(init=False)

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ConfigurationError(f"dt must be positive, got {self.dt!r}")
        if not (self.diffusion > 0.0 and math.isfinite(self.diffusion)):
            raise ConfigurationError(f"diffusion must be positive, got {self.diffusion!r}")
        object.__setattr__(
            self, "noise_amplitude", math.sqrt(2.0 * self.diffusion * self.dt)
        )

    @classmethod
    def from_physics(cls, params: PhysicalParams, dt: float) -> "StepParams":
        return cls(dt=dt, diffusion=params.diffusion)


def step(state: TrajectoryState, drift, sp: StepParams, rng, half_width: float) -> TrajectoryState:
    """Advance one step.  One normal variate is always consumed.

    A NaN drift value is the diverged sentinel: the walker is ejected to
    sign(q) * 10 * half_width instead of stepping.
    """
    xi = rng.normal()
    v = drift(state.position)
    if math.isnan(v):
        q = math.copysign(EJECT_FACTOR * half_width, state.position)
    else:
        q = state.position + v * sp.dt + xi * sp.noise_amplitude
    return TrajectoryState(q, state.step_count + 1)


def init_position(rng, mode: str, params: PhysicalParams) -> float:
    """Random starting position: the full domain or within 10% of the minimum."""
    u = rng.uniform()
    span = params.half_width
    if mode == "uniform_full":
        return -span + 2.0 * span * u
    if mode == "near_minimum":
        return 0.1 * (-span + 2.0 * span * u)
    raise ConfigurationError(f"unknown init mode {mode!r}")


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _kernel_record(q0, xi, dt, noise_amp, eject,
                   mode, omega, xs, vs, div, coef, bw,
                   half_width, counts):
    """Step len(xi) times, recording every post-step position."""
    q = q0
    oor = 0
    sum_q = 0.0
    sum_q2 = 0.0
    n_finite = 0
    n_bins = counts.shape[0]
    bin_width = 2.0 * half_width / n_bins
    for i in range(xi.shape[0]):
        if math.isfinite(q):
            v = drift_eval(mode, q, omega, xs, vs, div, coef, bw)
        else:
            v = np.nan
        if math.isnan(v):
            q = math.copysign(eject, q)
        else:
            q = q + v * dt + xi[i] * noise_amp
        if math.isfinite(q):
            if -half_width <= q <= half_width:
                j = int((q + half_width) / bin_width)
                if j >= n_bins:
                    j = n_bins - 1
                counts[j] += 1
            else:
                oor += 1
            sum_q += q
            sum_q2 += q * q
            n_finite += 1
        else:
            oor += 1
    return q, oor, sum_q, sum_q2, n_finite


@njit(cache=True, nogil=True)
def _kernel_escape(q0, k0, k_max, xi, dt, noise_amp, eject,
                   mode, omega, xs, vs, div, coef, bw,
                   escape_radius):
    """Step until escape or k_max steps; returns (q, k, escaped)."""
    q = q0
    k = k0
    for i in range(xi.shape[0]):
        if k >= k_max:
            break
        if math.isfinite(q):
            v = drift_eval(mode, q, omega, xs, vs, div, coef, bw)
        else:
            v = np.nan
        if math.isnan(v):
            q = math.copysign(eject, q)
        else:
            q = q + v * dt + xi[i] * noise_amp
        k += 1
        if not math.isfinite(q) or abs(q) > escape_radius:
            return q, k, True
    return q, k, False


def _record_python(q, xi, sp, drift, eject, sink):
    """Reference loop for arbitrary drift callables; mirrors the kernel."""
    sum_q = 0.0
    sum_q2 = 0.0
    n_finite = 0
    for x in xi:
        v = drift(q) if math.isfinite(q) else math.nan
        if math.isnan(v):
            q = math.copysign(eject, q)
        else:
            q = q + v * sp.dt + float(x) * sp.noise_amplitude
        sink.record(q)
        if math.isfinite(q):
            sum_q += q
            sum_q2 += q * q
            n_finite += 1
    return q, sum_q, sum_q2, n_finite


@dataclass
class FixedRunResult:
    """Outcome of a fixed-length recording run."""

    final_state: TrajectoryState
    histogram: ResidencyHistogram
    noise_series: list
    sum_positions: float
    sum_squared_positions: float
    finite_recorded: int

    @property
    def position_mean(self) -> float:
        return self.sum_positions / self.finite_recorded

    @property
    def position_variance(self) -> float:
        mean = self.position_mean
        return self.sum_squared_positions / self.finite_recorded - mean * mean

    @property
    def final_noise(self) -> float:
        return self.noise_series[-1][1]


def run_fixed(
    initial: TrajectoryState,
    drift,
    sp: StepParams,
    n_steps: int,
    sink: ResidencyHistogram,
    checkpoints=(),
    *,
    rng,
    oracle=None,
) -> FixedRunResult:
    """Step n_steps times, recording every post-step position into sink.

    At each checkpoint iteration the accumulated counts are normalized
    (without perturbing accumulation) and the solution noise against the
    oracle density is appended to the returned series.  A checkpoint at
    n_steps itself is allowed but not required.
    """
    if n_steps < 1:
        raise ConfigurationError(f"n_steps must be >= 1, got {n_steps}")
    checkpoints = [int(c) for c in checkpoints]
    if checkpoints:
        if oracle is None:
            raise ConfigurationError("checkpoints require an oracle density")
        if sorted(checkpoints) != checkpoints or len(set(checkpoints)) != len(checkpoints):
            raise ConfigurationError("checkpoints must be strictly ascending")
        if checkpoints[0] < 1 or checkpoints[-1] > n_steps:
            raise ConfigurationError("checkpoints must lie in [1, n_steps]")

    eject = EJECT_FACTOR * sink.half_width
    fast = isinstance(drift, DriftField)
    q = float(initial.position)
    noise_series = []
    sum_q = 0.0
    sum_q2 = 0.0
    n_finite = 0

    boundaries = checkpoints if checkpoints and checkpoints[-1] == n_steps else [*checkpoints, n_steps]
    checkpoint_set = set(checkpoints)
    done = 0
    for boundary in boundaries:
        remaining = boundary - done
        while remaining > 0:
            size = min(remaining, NOISE_CHUNK)
            xi = rng.normals(size)
            if fast:
                q, oor, dq, dq2, nf = _kernel_record(
                    q, xi, sp.dt, sp.noise_amplitude, eject,
                    *drift.kernel_args, sink.half_width, sink.counts,
                )
                sink.out_of_range += int(oor)
                sink.total_recorded += size
            else:
                q, dq, dq2, nf = _record_python(q, xi, sp, drift, eject, sink)
            sum_q += dq
            sum_q2 += dq2
            n_finite += int(nf)
            remaining -= size
        done = boundary
        if boundary in checkpoint_set:
            sigma = solution_noise(normalize(sink), oracle)
            noise_series.append((boundary, sigma))

    return FixedRunResult(
        final_state=TrajectoryState(q, initial.step_count + n_steps),
        histogram=sink,
        noise_series=noise_series,
        sum_positions=sum_q,
        sum_squared_positions=sum_q2,
        finite_recorded=n_finite,
    )


def run_until_escape(
    initial: TrajectoryState,
    drift,
    sp: StepParams,
    tau_max: float,
    escape_radius: float,
    *,
    rng,
) -> float:
    """Lifetime of the walker: time of first escape, capped at tau_max.

    Escape means |q| beyond escape_radius or a non-finite q.  The returned
    lifetime is an integer multiple of dt except for the tau_max cap; a
    walker already outside the radius returns 0.0 without stepping.
    """
    if not (tau_max > 0.0):
        raise ConfigurationError(f"tau_max must be positive, got {tau_max!r}")
    if not (escape_radius > 0.0):
        raise ConfigurationError(f"escape_radius must be positive, got {escape_radius!r}")

    q = float(initial.position)
    if not math.isfinite(q) or abs(q) > escape_radius:
        return 0.0

    eject = 2.0 * escape_radius
    k_max = math.ceil(tau_max / sp.dt)
    fast = isinstance(drift, DriftField)
    k = 0
    while k < k_max:
        size = min(k_max - k, NOISE_CHUNK)
        xi = rng.normals(size)
        if fast:
            q, k, escaped = _kernel_escape(
                q, k, k_max, xi, sp.dt, sp.noise_amplitude, eject,
                *drift.kernel_args, escape_radius,
            )
            k = int(k)
        else:
            escaped = False
            for x in xi:
                if k >= k_max:
                    break
                v = drift(q) if math.isfinite(q) else math.nan
                if math.isnan(v):
                    q = math.copysign(eject, q)
                else:
                    q = q + v * sp.dt + float(x) * sp.noise_amplitude
                k += 1
                if not math.isfinite(q) or abs(q) > escape_radius:
                    escaped = True
                    break
        if escaped:
            return min(k * sp.dt, tau_max)
    return tau_max
