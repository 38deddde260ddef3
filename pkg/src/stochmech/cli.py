"""Command-line front end.

Subcommands map one-to-one onto the studies; every run writes CSV outputs,
rendered PNG figures and a manifest.json recording the fully resolved
configuration, the seeds used and every file produced.  Given the same
manifest settings, outputs are byte-identical across runs.

Exit codes: 0 success, 1 configuration error, 2 numerical degeneracy,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from . import __version__, plots
from .errors import ConfigurationError, DegenerateInputError
from .experiments import (
    ExperimentConfig,
    convergence_study,
    dt_sweep,
    lifetime_vs_defect,
    lifetime_vs_dt,
    write_density_exports,
    write_fig1b_csv,
    write_fig2b_csv,
    write_fig3_csv,
    write_fig4_csv,
    write_fig5a_csv,
    write_fig5b_csv,
    write_replicates_csv,
    make_drift,
    run_recording_replicate,
)
from .field import CollocationGrid, field_scan, write_field_csv
from .histogram import (
    checkpoint_schedule,
    normalize,
    write_density_csv,
    write_noise_csv,
)
from .physics import PhysicalParams, ground_state_density

# Every tunable with its default; presets and config files may only set
# keys listed here.
DEFAULT_SETTINGS = {
    "seed": None,
    "hbar": 1.0,
    "mass": 1.0,
    "force_constant": 1.0,
    "half_width": 5.0,
    "dt": 0.005,
    "n_steps": 10_000_000,
    "n_bins": 128,
    "n_field": 129,
    "delta_e": 0.0,
    "replicates": 4,
    "tau_max": 1.0e4,
    "escape_radius": None,
    "init_mode": None,
    "interpolation_mode": None,
    "dt_list": None,
    "de_list": None,
    "n_bins_list": None,
    "sweep": None,
}

_FULL_DE_LIST = [-0.02, -0.015, -0.01, -0.005, 0.0, 0.005, 0.01, 0.015, 0.02, 0.025, 0.03]

# Full-scale presets reproduce the published studies; desk-* presets are
# scaled for quick runs.
PRESETS = {
    "paper-fig1": dict(dt=0.005, n_steps=10**8, replicates=12, delta_e=0.0,
                       n_bins_list=[32, 64, 128, 256]),
    "desk-fig1": dict(dt=0.005, n_steps=10**6, replicates=4, delta_e=0.0,
                      n_bins_list=[32, 64, 128, 256]),
    "paper-fig2": dict(dt_list=[0.5, 0.1, 0.02, 0.005, 0.001], n_steps=10**8,
                       replicates=12, n_bins=128, delta_e=0.0),
    "desk-fig2": dict(dt_list=[0.5, 0.005, 0.001], n_steps=10**7,
                      replicates=4, n_bins=128, delta_e=0.0),
    "paper-fig3": dict(dt_list=[0.5, 0.2, 0.1, 0.05, 0.02], n_steps=10**8,
                       replicates=12, n_bins=128, delta_e=0.0),
    "desk-fig3": dict(dt_list=[0.5, 0.2, 0.1, 0.05, 0.02], n_steps=10**7,
                      replicates=4, n_bins=128, delta_e=0.0),
    "paper-fig4": dict(de_list=[-0.02, -0.01, -0.005, 0.0, 0.005, 0.01, 0.03]),
    "desk-fig4": dict(de_list=[-0.02, -0.01, -0.005, 0.0, 0.005, 0.01, 0.03]),
    "paper-fig5a": dict(sweep="dt", dt_list=[1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1],
                        delta_e=0.01, tau_max=1e6, replicates=10),
    "desk-fig5a": dict(sweep="dt", dt_list=[1e-4, 1e-3, 1e-2],
                       delta_e=0.01, tau_max=1e4, replicates=10),
    "paper-fig5b": dict(sweep="defect", de_list=_FULL_DE_LIST, dt=1e-3,
                        tau_max=1e6, replicates=10),
    "desk-fig5b": dict(sweep="defect",
                       de_list=[-0.02, -0.01, -0.005, 0.0, 0.005, 0.01, 0.02, 0.03],
                       dt=1e-3, tau_max=1e4, replicates=10),
}

_OVERRIDE_KEYS = (
    "seed", "dt", "n_steps", "n_bins", "n_field", "delta_e", "replicates",
    "tau_max", "escape_radius", "init_mode", "interpolation_mode",
    "dt_list", "de_list", "n_bins_list", "sweep",
)


def _float_list(text: str):
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad list value {text!r}") from exc


def _int_list(text: str):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad list value {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument("--seed", type=int, help="base seed (required here or in the config)")
    common.add_argument("--threads", type=int, default=1, help="replicate worker threads")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--preset", help="named parameter set (paper-* or desk-*)")
    common.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    common.add_argument("--dt", type=float)
    common.add_argument("--n-steps", dest="n_steps", type=int)
    common.add_argument("--n-bins", dest="n_bins", type=int)
    common.add_argument("--n-field", dest="n_field", type=int)
    common.add_argument("--delta-e", dest="delta_e", type=float)
    common.add_argument("--replicates", type=int)
    common.add_argument("--tau-max", dest="tau_max", type=float)
    common.add_argument("--escape-radius", dest="escape_radius", type=float)
    common.add_argument("--init-mode", dest="init_mode",
                        choices=["uniform_full", "near_minimum"])
    common.add_argument("--interpolation-mode", dest="interpolation_mode",
                        choices=["global", "local3", "analytic"])
    common.add_argument("--dt-list", dest="dt_list", type=_float_list)
    common.add_argument("--de-list", dest="de_list", type=_float_list)
    common.add_argument("--n-bins-list", dest="n_bins_list", type=_int_list)
    common.add_argument("--sweep", choices=["dt", "defect"],
                        help="lifetime sweep variable")

    parser = argparse.ArgumentParser(
        prog="stochmech",
        description="Drift-field Langevin simulator for bound-state densities",
    )
    parser.add_argument("--version", action="version", version=f"stochmech {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve-field", parents=[common],
                   help="solve the drift field and export it")
    sub.add_parser("simulate", parents=[common],
                   help="single recording run: density + noise series")
    sub.add_parser("converge", parents=[common],
                   help="final noise vs histogram resolution")
    sub.add_parser("dt-sweep", parents=[common],
                   help="noise vs iteration and converged noise vs dt")
    sub.add_parser("lifetime", parents=[common],
                   help="lifetime vs dt or vs energy defect")
    sub.add_parser("field-scan", parents=[common],
                   help="solve the field across a defect list")
    return parser


def load_config_file(path: Path) -> dict:
    """Flatten the TOML sections into the settings namespace."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"bad config file {path}: {exc}") from exc

    flat = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    unknown = set(flat) - set(DEFAULT_SETTINGS)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    return flat


def resolve_settings(args) -> tuple[dict, dict]:
    """Defaults <- preset <- config file <- flags; returns (settings, overrides)."""
    settings = dict(DEFAULT_SETTINGS)
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise ConfigurationError(
                f"unknown preset {args.preset!r}; known: {', '.join(sorted(PRESETS))}"
            )
        settings.update(PRESETS[args.preset])
    if args.config is not None:
        settings.update(load_config_file(args.config))
    overrides = {}
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
            overrides[key] = value
    if settings["seed"] is None:
        raise ConfigurationError(
            "no seed given: set `seed` in the config file or pass --seed"
        )
    return settings, overrides


def experiment_config(settings: dict) -> ExperimentConfig:
    params = PhysicalParams(
        hbar=settings["hbar"],
        mass=settings["mass"],
        force_constant=settings["force_constant"],
        half_width=settings["half_width"],
    )
    return ExperimentConfig(
        seed_base=int(settings["seed"]),
        params=params,
        dt=settings["dt"],
        n_steps=int(settings["n_steps"]),
        n_bins=int(settings["n_bins"]),
        n_field=int(settings["n_field"]),
        delta_e=settings["delta_e"],
        replicates=int(settings["replicates"]),
        tau_max=settings["tau_max"],
        escape_radius=settings["escape_radius"],
        init_mode=settings["init_mode"],
        interpolation_mode=settings["interpolation_mode"],
    )


class _Run:
    """Tracks written outputs for the manifest."""

    def __init__(self, args, settings, overrides):
        self.args = args
        self.settings = settings
        self.overrides = overrides
        self.out_dir = Path(args.out)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs = []
        self.stream_indices = {}

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out_dir / name

    def want_figures(self) -> bool:
        return not self.args.no_figures

    def write_manifest(self, command: str) -> None:
        manifest = {
            "tool": "stochmech",
            "version": __version__,
            "command": command,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "preset": self.args.preset,
            "threads": self.args.threads,
            "settings": {k: v for k, v in self.settings.items()},
            "overrides": self.overrides,
            "stream_indices": self.stream_indices,
            "outputs": self.outputs,
        }
        with open(self.out_dir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {len(self.outputs)} output file(s) + manifest.json to {self.out_dir}")


def _defect_list(run: _Run, config) -> list:
    de_list = run.settings["de_list"]
    if de_list is None:
        de_list = [config.delta_e]
    return [float(de) for de in de_list]


def cmd_solve_field(run: _Run) -> None:
    config = experiment_config(run.settings)
    grid = CollocationGrid(config.n_field, config.params.half_width)
    defects = _defect_list(run, config)
    tables = field_scan(config.params, defects, grid)
    for de, table in zip(defects, tables):
        write_field_csv(run.path(f"field_dE{de:+g}.csv"), table)
    if run.want_figures():
        plots.save_field_figure(run.path("field.png"), defects, tables)
    run.write_manifest("solve-field")


def cmd_field_scan(run: _Run) -> None:
    config = experiment_config(run.settings)
    grid = CollocationGrid(config.n_field, config.params.half_width)
    defects = _defect_list(run, config)
    if len(defects) < 1:
        raise ConfigurationError("field-scan needs a defect list (de_list)")
    tables = field_scan(config.params, defects, grid)
    write_fig4_csv(run.path("fig4.csv"), defects, tables)
    if run.want_figures():
        plots.save_field_figure(run.path("fig4.png"), defects, tables)
    run.write_manifest("field-scan")


def cmd_simulate(run: _Run) -> None:
    config = experiment_config(run.settings)
    drift = make_drift(config, config.delta_e, config.interpolation_mode or "global")
    checkpoints = checkpoint_schedule(config.n_steps) if config.n_steps >= 10 else []
    result = run_recording_replicate(config, drift, config.n_bins, 0, checkpoints)
    run.stream_indices["simulate"] = [0]
    density = normalize(result.histogram)
    oracle = lambda x: ground_state_density(config.params, x)
    write_density_csv(run.path("density.csv"), density, result.histogram, oracle)
    write_noise_csv(run.path("noise.csv"), result.noise_series)
    if run.want_figures():
        plots.save_density_figure(run.path("density.png"), density, oracle)
        if result.noise_series:
            plots.save_noise_series_figure(run.path("noise.png"), result.noise_series)
    run.write_manifest("simulate")


def cmd_converge(run: _Run) -> None:
    config = experiment_config(run.settings)
    n_bins_list = run.settings["n_bins_list"]
    if not n_bins_list:
        raise ConfigurationError("converge needs n_bins_list (preset, config or flag)")
    result = convergence_study(config, n_bins_list, threads=run.args.threads)
    write_fig1b_csv(run.path("fig1b.csv"), result)
    for name in write_density_exports(run.out_dir, result):
        run.outputs.append(name)
    write_replicates_csv(
        run.path("replicates.csv"), "n_bins",
        [(row.n_bins, row.stream_indices, row.stats.values) for row in result.rows],
    )
    for row in result.rows:
        run.stream_indices[str(row.n_bins)] = row.stream_indices
    if run.want_figures():
        oracle = lambda x: ground_state_density(config.params, x)
        plots.save_densities_figure(run.path("fig1a.png"), result.rows, oracle)
        plots.save_convergence_figure(run.path("fig1b.png"), result)
    run.write_manifest("converge")


def cmd_dt_sweep(run: _Run) -> None:
    config = experiment_config(run.settings)
    dt_list = run.settings["dt_list"]
    if not dt_list:
        raise ConfigurationError("dt-sweep needs dt_list (preset, config or flag)")
    result = dt_sweep(config, dt_list, threads=run.args.threads)
    write_fig2b_csv(run.path("fig2b.csv"), result)
    write_fig3_csv(run.path("fig3.csv"), result)
    write_replicates_csv(
        run.path("replicates.csv"), "dt",
        [(row.dt, row.stream_indices, row.final.values) for row in result.rows],
    )
    for row in result.rows:
        run.stream_indices[f"{row.dt:g}"] = row.stream_indices
    if run.want_figures():
        plots.save_dt_curves_figure(run.path("fig2b.png"), result)
        plots.save_final_noise_figure(run.path("fig3.png"), result)
    run.write_manifest("dt-sweep")


def cmd_lifetime(run: _Run) -> None:
    config = experiment_config(run.settings)
    sweep = run.settings["sweep"]
    if sweep not in ("dt", "defect"):
        raise ConfigurationError("lifetime needs --sweep dt|defect (or a preset)")
    if sweep == "dt":
        dt_list = run.settings["dt_list"]
        if not dt_list:
            raise ConfigurationError("lifetime --sweep dt needs dt_list")
        result = lifetime_vs_dt(config, dt_list, threads=run.args.threads)
        write_fig5a_csv(run.path("fig5a.csv"), result)
        if run.want_figures():
            plots.save_lifetime_figure(run.path("fig5a.png"), result, "dt", log_x=True)
    else:
        de_list = run.settings["de_list"]
        if not de_list:
            raise ConfigurationError("lifetime --sweep defect needs de_list")
        result = lifetime_vs_defect(config, de_list, threads=run.args.threads)
        write_fig5b_csv(run.path("fig5b.csv"), result)
        if run.want_figures():
            plots.save_lifetime_figure(run.path("fig5b.png"), result, "energy defect")
    write_replicates_csv(
        run.path("replicates.csv"), "dt" if sweep == "dt" else "delta_e",
        [(row.key, row.stream_indices, row.stats.values) for row in result.rows],
    )
    for row in result.rows:
        run.stream_indices[f"{row.key:g}"] = row.stream_indices
    run.write_manifest("lifetime")


_COMMANDS = {
    "solve-field": cmd_solve_field,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "dt-sweep": cmd_dt_sweep,
    "lifetime": cmd_lifetime,
    "field-scan": cmd_field_scan,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; fold that into the config-error code
        return 0 if not exc.code else 1
    try:
        settings, overrides = resolve_settings(args)
        run = _Run(args, settings, overrides)
        _COMMANDS[args.command](run)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DegenerateInputError as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
