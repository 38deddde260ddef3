"""Unit system and the analytic harmonic-well reference solution.

Everything here is a pure function of its inputs.  With the default unit
constants (hbar = m = k = 1) the reference system has ground energy 0.5,
diffusion coefficient 0.5 and drift field v(x) = -x, which makes the rest
of the package exactly checkable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

# Nodes of a sampled wavefunction with |psi| below this are not usable for
# the log-derivative; they get flagged instead of clamped.
PSI_MAGNITUDE_FLOOR = 1e-12


@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants and the computational domain half-width."""

    hbar: float = 1.0
    mass: float = 1.0
    force_constant: float = 1.0
    half_width: float = 5.0

    def __post_init__(self):
        for name in ("hbar", "mass", "force_constant", "half_width"):
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ConfigurationError(f"{name} must be positive, got {value!r}")

    @property
    def diffusion(self) -> float:
        return self.hbar / (2.0 * self.mass)

    @property
    def omega(self) -> float:
        return math.sqrt(self.force_constant / self.mass)

    def potential(self, x):
        """Quadratic well V(x) = k x^2 / 2 (scalar or array)."""
        return 0.5 * self.force_constant * np.square(x)


@dataclass(frozen=True)
class EnergySpec:
    """Trial energy split into the exact ground energy plus a defect."""

    ground_energy: float
    defect: float = 0.0

    @property
    def total(self) -> float:
        return self.ground_energy + self.defect

    @classmethod
    def for_params(cls, params: PhysicalParams, defect: float = 0.0) -> "EnergySpec":
        return cls(ground_energy=ground_state_energy(params), defect=defect)


def diffusion_coefficient(params: PhysicalParams) -> float:
    """D = hbar / (2 m)."""
    return params.hbar / (2.0 * params.mass)


def ground_state_energy(params: PhysicalParams) -> float:
    """Exact ground energy of the quadratic well, (hbar/2) sqrt(k/m)."""
    return 0.5 * params.hbar * params.omega


def analytic_velocity(params: PhysicalParams, x):
    """Ground-state drift field, v(x) = -sqrt(k/m) x (scalar or array)."""
    return -params.omega * x


def ground_state_density(params: PhysicalParams, x):
    """Ground-state probability density, a normalized Gaussian.

    Equals (m w / (pi hbar))^(1/2) exp(-m w x^2 / hbar) with w = sqrt(k/m);
    integrates to 1 over the whole axis.
    """
    a = params.mass * params.omega / params.hbar
    return math.sqrt(a / math.pi) * np.exp(-a * np.square(x))


def bridge_residual(params: PhysicalParams, v, dv_dx, x, energy: float):
    """Residual of the drift/energy balance at a point.

    Returns -(hbar/2) dv/dx - (m/2) v^2 + V(x) - E; zero exactly when the
    pair (v, E) solves the balance at x.  Accepts scalars or arrays.
    """
    return (
        -0.5 * params.hbar * np.asarray(dv_dx)
        - 0.5 * params.mass * np.square(v)
        + params.potential(x)
        - energy
    )


def velocity_from_wavefunction(
    psi,
    spacing: float,
    params: PhysicalParams,
    magnitude_floor: float = PSI_MAGNITUDE_FLOOR,
):
    """Drift field from a sampled (possibly complex) wavefunction.

    Computes (hbar/m) { Re[psi'/psi] + Im[psi'/psi] } with psi' from central
    differences at interior nodes and one-sided differences at the ends.
    Nodes where |psi| < magnitude_floor cannot support the division; they are
    returned as NaN with a False entry in the validity mask.

    Returns (velocity array, valid mask).  This is a cross-check oracle, not
    the production drift path.
    """
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.ndim != 1 or psi.size < 3:
        raise ConfigurationError("psi must be a 1-D array with at least 3 samples")
    if not (spacing > 0.0):
        raise ConfigurationError(f"grid spacing must be positive, got {spacing!r}")

    grad = np.gradient(psi, spacing)
    valid = np.abs(psi) >= magnitude_floor
    v = np.full(psi.shape, np.nan)
    ratio = grad[valid] / psi[valid]
    v[valid] = (params.hbar / params.mass) * (ratio.real + ratio.imag)
    return v, valid
