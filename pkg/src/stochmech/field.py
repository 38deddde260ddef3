"""Drift-field solver and interpolation.

The drift (velocity) field for a trial energy E0 + dE is obtained by
explicit marching of the drift/energy balance away from the potential
minimum, where the field is pinned to zero.  Solved tables are immutable
and safe to share across threads.

Marching can blow up: a node whose value is non-finite or beyond a
magnitude cap is marked diverged, and every node farther out on that side
is diverged too.  Divergence is data, not an error; walkers hitting a
diverged region are ejected by the stepping layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, UnsupportedModeError
from .physics import EnergySpec, PhysicalParams
from .util import field_value_cell, fmt_float, write_csv

# |v| beyond this during marching counts as divergence (prevents float
# overflow from contaminating neighboring logic).
MAGNITUDE_CAP = 1e12

# Sentinel returned by drift evaluation when the field is unusable at x;
# the stepping layer turns it into immediate ejection.
DIVERGED = math.nan


def is_diverged(value: float) -> bool:
    return math.isnan(value)


@dataclass(frozen=True)
class CollocationGrid:
    """Uniform odd-count grid over [-L, +L] with a node exactly at 0."""

    n_points: int = 129
    half_width: float = 5.0

    def __post_init__(self):
        if self.n_points < 5 or self.n_points % 2 == 0:
            raise ConfigurationError(
                f"n_points must be odd and >= 5, got {self.n_points}"
            )
        if not (self.half_width > 0.0 and math.isfinite(self.half_width)):
            raise ConfigurationError(
                f"half_width must be positive, got {self.half_width!r}"
            )

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    @property
    def center_index(self) -> int:
        return (self.n_points - 1) // 2

    @cached_property
    def nodes(self) -> np.ndarray:
        # Built from a half-grid mirror so the center node is exactly 0.0
        # and x[n-1-j] == -x[j] bitwise.
        right = np.linspace(0.0, self.half_width, self.center_index + 1)
        nodes = np.concatenate((-right[:0:-1], right))
        nodes.setflags(write=False)
        return nodes


@dataclass(frozen=True)
class VelocityFieldTable:
    """Solved drift values on a collocation grid, with divergence flags."""

    grid: CollocationGrid
    values: np.ndarray
    diverged: np.ndarray
    energy: EnergySpec

    def __post_init__(self):
        if self.values.shape != (self.grid.n_points,):
            raise ConfigurationError("values length must match the grid")
        if self.diverged.shape != (self.grid.n_points,):
            raise ConfigurationError("diverged mask length must match the grid")

    @property
    def has_divergence(self) -> bool:
        return bool(self.diverged.any())

    def stability_radius(self) -> float:
        """Distance from center to the nearest diverged node (inf if none)."""
        if not self.has_divergence:
            return math.inf
        nodes = self.grid.nodes[self.diverged]
        return float(np.min(np.abs(nodes)))


def solve_field(
    params: PhysicalParams,
    energy: EnergySpec,
    grid: CollocationGrid,
    magnitude_cap: float = MAGNITUDE_CAP,
) -> VelocityFieldTable:
    """March the drift field outward from v(0) = 0 at the trial energy.

    Going right, v[j+1] = v[j] - (dx/hbar) (m v[j]^2 - k x[j]^2 + 2 E);
    going left the increment flips sign.  At the exact ground energy with
    unit constants the bracket is identically 1 along v = -x, so the scheme
    reproduces the linear field to round-off.
    """
    nodes = grid.nodes
    n = grid.n_points
    center = grid.center_index
    if nodes[center] != 0.0:
        raise ConfigurationError("grid center node must sit exactly at x = 0")

    v = np.zeros(n)
    flag = np.zeros(n, dtype=bool)
    scale = grid.spacing / params.hbar
    m = params.mass
    k = params.force_constant
    e2 = 2.0 * energy.total

    def sweep(indices, sign):
        alive = True
        for j in indices:
            target = j + sign
            if not alive:
                flag[target] = True
                v[target] = math.nan
                continue
            bracket = m * v[j] * v[j] - k * nodes[j] * nodes[j] + e2
            nxt = v[j] - sign * scale * bracket
            if math.isfinite(nxt) and abs(nxt) <= magnitude_cap:
                v[target] = nxt
            else:
                flag[target] = True
                v[target] = math.nan if math.isnan(nxt) else math.copysign(math.inf, nxt)
                alive = False

    sweep(range(center, n - 1), +1)
    sweep(range(center, 0, -1), -1)

    v.setflags(write=False)
    flag.setflags(write=False)
    return VelocityFieldTable(grid=grid, values=v, diverged=flag, energy=energy)


def field_scan(params: PhysicalParams, defects, grid: CollocationGrid,
               magnitude_cap: float = MAGNITUDE_CAP):
    """One solved table per energy defect, in the given order."""
    defects = list(defects)
    if not defects:
        raise ConfigurationError("defect list must be nonempty")
    return [
        solve_field(params, EnergySpec.for_params(params, de), grid, magnitude_cap)
        for de in defects
    ]


# ---------------------------------------------------------------------------
# Drift evaluation.  The scalar evaluators are numba-compiled so the same
# code serves both the public interpolation API and the stepping kernels.
# ---------------------------------------------------------------------------

DRIFT_ANALYTIC = 0
DRIFT_LOCAL3 = 1
DRIFT_CUBIC = 2
DRIFT_BARYCENTRIC = 3

_EMPTY_F = np.empty(0)
_EMPTY_B = np.empty(0, dtype=np.bool_)
_EMPTY_C = np.empty((4, 0))


@njit(cache=True, nogil=True, inline="always")
def _eval_local3(xs, vs, div, q):
    """Quadratic through the three nodes nearest q; NaN when unusable."""
    n = xs.shape[0]
    if q < xs[1] or q > xs[n - 2]:
        return np.nan
    dxf = xs[1] - xs[0]
    j = int((q - xs[0]) / dxf)
    if j < 1:
        j = 1
    elif j > n - 3:
        j = n - 3
    # Third node: nearer of the two outer neighbors, ties toward center.
    da = q - xs[j - 1]
    db = xs[j + 2] - q
    if da < db:
        k = j - 1
    elif db < da:
        k = j + 2
    else:
        c = (n - 1) // 2
        k = j - 1 if abs(j - 1 - c) <= abs(j + 2 - c) else j + 2
    if div[j] or div[j + 1] or div[k]:
        return np.nan
    x1 = xs[k]
    x2 = xs[j]
    x3 = xs[j + 1]
    l1 = (q - x2) * (q - x3) / ((x1 - x2) * (x1 - x3))
    l2 = (q - x1) * (q - x3) / ((x2 - x1) * (x2 - x3))
    l3 = (q - x1) * (q - x2) / ((x3 - x1) * (x3 - x2))
    return vs[k] * l1 + vs[j] * l2 + vs[j + 1] * l3


@njit(cache=True, nogil=True, inline="always")
def _eval_cubic(xs, coef, q):
    """Piecewise cubic with natural end-segment extrapolation."""
    nseg = coef.shape[1]
    dxf = xs[1] - xs[0]
    j = int((q - xs[0]) / dxf)
    if j < 0:
        j = 0
    elif j >= nseg:
        j = nseg - 1
    t = q - xs[j]
    return ((coef[0, j] * t + coef[1, j]) * t + coef[2, j]) * t + coef[3, j]


@njit(cache=True, nogil=True, inline="always")
def _eval_barycentric(xs, vs, bw, q):
    num = 0.0
    den = 0.0
    for i in range(xs.shape[0]):
        d = q - xs[i]
        if d == 0.0:
            return vs[i]
        t = bw[i] / d
        num += t * vs[i]
        den += t
    return num / den


@njit(cache=True, nogil=True, inline="always")
def drift_eval(mode, q, omega, xs, vs, div, coef, bw):
    if mode == DRIFT_ANALYTIC:
        return -omega * q
    if mode == DRIFT_LOCAL3:
        return _eval_local3(xs, vs, div, q)
    if mode == DRIFT_CUBIC:
        return _eval_cubic(xs, coef, q)
    return _eval_barycentric(xs, vs, bw, q)


def barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    """Inverse cross-products with capacity scaling to keep magnitudes sane."""
    nodes = np.asarray(nodes, dtype=float)
    cap = (nodes[-1] - nodes[0]) / 4.0
    diff = (nodes[:, None] - nodes[None, :]) / cap
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


class DriftField:
    """Velocity evaluator usable both from Python and inside step kernels.

    Construct via the factory methods; `__call__` evaluates a scalar
    position and returns NaN as the diverged/out-of-range sentinel (local3
    mode only; global modes extrapolate).  `evaluate` additionally reports
    whether x fell outside [-L, +L].
    """

    def __init__(self, mode, half_width, omega=0.0, xs=None, vs=None,
                 div=None, coef=None, bw=None):
        self.mode = int(mode)
        self.half_width = float(half_width)
        self.omega = float(omega)
        self.xs = _EMPTY_F if xs is None else np.ascontiguousarray(xs, dtype=float)
        self.vs = _EMPTY_F if vs is None else np.ascontiguousarray(vs, dtype=float)
        self.div = _EMPTY_B if div is None else np.ascontiguousarray(div, dtype=np.bool_)
        self.coef = _EMPTY_C if coef is None else np.ascontiguousarray(coef, dtype=float)
        self.bw = _EMPTY_F if bw is None else np.ascontiguousarray(bw, dtype=float)

    @classmethod
    def analytic(cls, params: PhysicalParams) -> "DriftField":
        return cls(DRIFT_ANALYTIC, params.half_width, omega=params.omega)

    @classmethod
    def global_interpolant(cls, table: VelocityFieldTable, method: str = "cubic") -> "DriftField":
        if table.has_divergence:
            raise UnsupportedModeError(
                "global interpolation needs a divergence-free table; "
                "use local3 interpolation instead"
            )
        xs = table.grid.nodes
        if method == "cubic":
            spline = CubicSpline(xs, table.values)
            return cls(DRIFT_CUBIC, table.grid.half_width, xs=xs, coef=spline.c)
        if method == "barycentric":
            return cls(
                DRIFT_BARYCENTRIC,
                table.grid.half_width,
                xs=xs,
                vs=table.values,
                bw=barycentric_weights(xs),
            )
        raise ConfigurationError(f"unknown global interpolation method {method!r}")

    @classmethod
    def local3(cls, table: VelocityFieldTable) -> "DriftField":
        values = np.where(table.diverged, 0.0, table.values)
        return cls(
            DRIFT_LOCAL3,
            table.grid.half_width,
            xs=table.grid.nodes,
            vs=values,
            div=table.diverged,
        )

    @property
    def kernel_args(self):
        return (self.mode, self.omega, self.xs, self.vs, self.div, self.coef, self.bw)

    def __call__(self, x: float) -> float:
        return float(drift_eval(self.mode, float(x), *self.kernel_args[1:]))

    def evaluate(self, x: float):
        """(velocity, extrapolated) — the flag marks |x| beyond the domain."""
        return self(x), abs(x) > self.half_width


def interpolate_global(table: VelocityFieldTable, x: float, method: str = "cubic") -> float:
    """Smooth node-exact interpolant over the whole table, evaluated at x.

    Outside [-L, +L] the chosen scheme extrapolates (use
    DriftField.evaluate to obtain the extrapolation flag).  Tables with
    diverged nodes are not supported here.
    """
    return DriftField.global_interpolant(table, method)(x)


def interpolate_local3(table: VelocityFieldTable, x: float) -> float:
    """Quadratic through the three bounding nodes of x.

    Returns the diverged sentinel (NaN) when x falls outside the
    interpolable range [x_1, x_{n-2}] or any of the three nodes is
    diverged; the stepping layer treats that as immediate ejection.
    """
    return DriftField.local3(table)(x)


def write_field_csv(path, table: VelocityFieldTable) -> None:
    """CSV export: x,v,diverged per node (diverged v as inf/-inf/empty)."""
    rows = [
        (fmt_float(x), field_value_cell(v, d), "1" if d else "0")
        for x, v, d in zip(table.grid.nodes, table.values, table.diverged)
    ]
    write_csv(path, ["x", "v", "diverged"], rows)
