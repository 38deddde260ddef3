"""Drift-field Langevin simulator for bound-state probability densities.

The library solves a first-order balance between potential, total energy and
a drift (velocity) field, then integrates a single stochastic walker under
that drift to accumulate a residency histogram whose normalized form is the
particle's probability density.  A harmonic well with an exactly known
ground state serves as the built-in reference system.
"""

__version__ = "0.1.0"

from .physics import (
    PhysicalParams,
    EnergySpec,
    diffusion_coefficient,
    ground_state_energy,
    analytic_velocity,
    ground_state_density,
    bridge_residual,
    velocity_from_wavefunction,
)
from .field import (
    CollocationGrid,
    VelocityFieldTable,
    DriftField,
    solve_field,
    field_scan,
    interpolate_global,
    interpolate_local3,
)
from .langevin import (
    RngStream,
    TrajectoryState,
    StepParams,
    step,
    run_fixed,
    run_until_escape,
    init_position,
)
from .histogram import (
    ResidencyHistogram,
    NormalizedDensity,
    normalize,
    solution_noise,
    checkpoint_schedule,
    merge,
)
from .experiments import (
    ExperimentConfig,
    ReplicateStats,
    convergence_study,
    dt_sweep,
    powerlaw_fit,
    lifetime_vs_dt,
    lifetime_vs_defect,
)
from .errors import ConfigurationError, DegenerateInputError, UnsupportedModeError
