"""Command-line entry point ``lab``.

Exit codes: 0 when every numerical gate passes, 1 on a numerical gate failure
(or a solver abort), 2 on configuration or input errors.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import ConfigurationError, InputError, LabError
from .io import load_state, save_fluid, save_wave, write_csv

EXIT_OK, EXIT_GATE, EXIT_CONFIG = 0, 1, 2

HARTREE_COLUMNS = ("run_id", "version", "config_hash", "time", "mass", "kinetic", "potential", "total", "continuity_residual")
EULER_COLUMNS = (
    "run_id", "version", "config_hash", "time", "mass", "momentum_x", "momentum_y", "momentum_z",
    "energy", "grad_u_inf", "lap_div_u_inf", "blow_up",
)  # fmt: skip
NBODY_RUN_COLUMNS = (
    "run_id", "version", "config_hash", "time", "classical_energy", "kinetic_modulated",
    "f_n_scaled", "total_modulated_per_particle", "min_pair_distance",
)  # fmt: skip
KERNEL_COLUMNS = ("name", "value", "reference", "error", "tolerance", "passed")


def _output(path: str | None, default: Path):
    if path == "-":
        return sys.stdout
    return Path(path) if path else default


def cmd_sweep(args) -> int:
    from .harness import format_report, sweep

    config = load_config(args.config)
    which = args.only
    result = sweep(config, workers=args.workers, hbar=which in (None, "hbar"), nbody=which in (None, "n"))
    print(format_report(config, result), end="")
    print(f"outputs written to {config.output_dir}")
    return EXIT_OK if result.passed else EXIT_GATE


def cmd_hartree_run(args) -> int:
    from .euler_poisson import wkb_initializer
    from .hartree import HartreeSolver, HartreeState, continuity_residual, hartree_energy

    config = load_config(args.config)
    hbar = args.hbar if args.hbar is not None else config.hbar_list[0]
    psi, _ = wkb_initializer(config.density(), config.phase(hbar), hbar)
    solver = HartreeSolver(self_consistent=config.self_consistent)
    state = HartreeState(psi)
    meta = dict(run_id=f"hartree-{hbar:g}", version=__version__, config_hash=config.config_hash())
    rows, window = [], [state]

    def row_for(s):
        e = hartree_energy(s, solver)
        return dict(meta, time=s.time, mass=s.psi.norm2(), kinetic=e.kinetic, potential=e.potential, total=e.total)

    rows.append(row_for(state))
    for _ in range(config.n_steps):
        state = solver.step(state, config.dt)
        window = (window + [state])[-3:]
        if len(window) == 3:
            rows[-1]["continuity_residual"] = continuity_residual(window)
        rows.append(row_for(state))
    dest = _output(args.output, config.output_dir / f"hartree_{hbar:g}.csv")
    write_csv(dest, HARTREE_COLUMNS, rows)
    save_wave(config.output_dir / f"hartree_{hbar:g}_final.npz", state.psi, state.time)
    return EXIT_OK


def cmd_euler_run(args) -> int:
    from .euler_poisson import EulerPoissonSolver, fluid_energy, fluid_mass, fluid_momentum, regularity_monitor
    from .errors import BlowUpError
    from .harness import _initial_fluid

    config = load_config(args.config)
    _, fluid = _initial_fluid(config, config.hbar_list[0])
    solver = EulerPoissonSolver()
    threshold = 50.0 / config.t_final
    meta = dict(run_id="euler", version=__version__, config_hash=config.config_hash())
    rows = []
    status = EXIT_OK

    def row_for(f):
        mon = regularity_monitor(f, threshold)
        p = np.zeros(3)
        p[: f.grid.dim] = fluid_momentum(f)
        return mon, dict(
            meta, time=f.time, mass=fluid_mass(f), momentum_x=p[0], momentum_y=p[1], momentum_z=p[2],
            energy=fluid_energy(f), grad_u_inf=mon.grad_u_inf, lap_div_u_inf=mon.laplacian_div_u_inf,
            blow_up=mon.blow_up_flag,
        )  # fmt: skip

    mon, row = row_for(fluid)
    rows.append(row)
    for _ in range(config.n_steps):
        try:
            fluid = solver.step(fluid, config.dt)
        except BlowUpError as exc:
            print(f"stopped: {exc}", file=sys.stderr)
            status = EXIT_GATE
            break
        mon, row = row_for(fluid)
        rows.append(row)
        if mon.blow_up_flag:
            print(f"regularity monitor flagged blow-up at t = {fluid.time:.6g}", file=sys.stderr)
            status = EXIT_GATE
            break
    write_csv(_output(args.output, config.output_dir / "euler.csv"), EULER_COLUMNS, rows)
    save_fluid(config.output_dir / "euler_final.npz", fluid)
    return status


def cmd_nbody_run(args) -> int:
    from .ensemble import classical_energy, configuration_energy, monokinetic_sample, nbody_run
    from .harness import fluid_trajectory

    config = load_config(args.config)
    n = args.n if args.n is not None else config.n_list[0]
    fluid_states, horizon = fluid_trajectory(config)
    f0 = fluid_states[0]
    seed = config.seed_for(n, 0)
    ps = monokinetic_sample(f0.rho, f0.u, n, seed)
    meta = dict(run_id=f"nbody-{n}", version=__version__, config_hash=config.config_hash())
    rows = []

    def record(ps, fluid):
        ce = configuration_energy(ps, fluid.rho, fluid.u)
        rows.append(
            dict(
                meta, time=ps.time, classical_energy=classical_energy(ps), kinetic_modulated=ce.kinetic_modulated,
                f_n_scaled=ce.f_n / n**2, total_modulated_per_particle=ce.total_modulated_per_particle,
                min_pair_distance=ps.min_pair_distance,
            )  # fmt: skip
        )

    record(ps, f0)
    done = 0
    for step in sorted(fluid_states)[1:]:
        ps = nbody_run(ps, config.dt, step - done)
        done = step
        record(ps, fluid_states[step])
    write_csv(_output(args.output, config.output_dir / f"nbody_{n}.csv"), NBODY_RUN_COLUMNS, rows)
    return EXIT_OK if horizon is None else EXIT_GATE


def cmd_check_kernels(args) -> int:
    from .kernels import kernel_checks

    rows = kernel_checks()
    write_csv(sys.stdout, KERNEL_COLUMNS, rows)
    return EXIT_OK if all(r["passed"] for r in rows) else EXIT_GATE


def cmd_diagnose(args) -> int:
    from .diagnostics import factorized_modulated_energy, g_functional
    from .euler_poisson import FluidState

    wave = load_state(args.state)
    fluid = load_state(args.fluid)
    if not isinstance(wave, tuple) or not isinstance(fluid, FluidState):
        raise ConfigurationError("--state must hold a wave function and --fluid a fluid state")
    psi, _ = wave
    if psi.grid != fluid.grid:
        raise ConfigurationError("state and fluid files use different grids")
    rep = g_functional(psi, fluid)
    row = dict(
        time=fluid.time, hbar=psi.hbar, kinetic_modulated=rep.kinetic_modulated,
        potential_gap=rep.potential_gap, g_total=rep.g_total, e_factorized=math.nan,
    )  # fmt: skip
    if args.n is not None:
        row["e_factorized"] = factorized_modulated_energy(psi, fluid, args.n).extra_terms["E"]
    write_csv(sys.stdout, tuple(row), [row])
    return EXIT_OK


def cmd_wigner(args) -> int:
    from .phase_space import husimi_transform, wigner_transform

    wave = load_state(args.state)
    if not isinstance(wave, tuple):
        raise ConfigurationError("--state must hold a wave function")
    psi, _ = wave
    w = wigner_transform(psi, xi_points=args.xi_points, xi_max=args.xi_max)
    hu = husimi_transform(w)
    x = np.repeat(w.x_grid.axis, w.xi_points)
    xi = np.tile(w.xi, w.x_grid.points_per_axis)
    rows = (dict(x=a, xi=b, W=c, W_husimi=d) for a, b, c, d in zip(x, xi, w.values.ravel(), hu.values.ravel()))
    dest = sys.stdout if args.output in (None, "-") else Path(args.output)
    write_csv(dest, ("x", "xi", "W", "W_husimi"), rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description="Mean-field and semiclassical limit experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="hbar and N sweeps with rate fits")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=None, help="overrides MFLAB_WORKERS")
    s.add_argument("--only", choices=("hbar", "n"), default=None)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("hartree-run", help="single Hartree run, per-step CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--hbar", type=float, default=None)
    s.add_argument("--output", default=None, help="CSV path, '-' for stdout")
    s.set_defaults(func=cmd_hartree_run)

    s = sub.add_parser("euler-run", help="single Euler-Poisson run, per-step CSV")
    s.add_argument("--config", required=True)
    s.add_argument("--output", default=None)
    s.set_defaults(func=cmd_euler_run)

    s = sub.add_parser("nbody-run", help="single N-body run next to the fluid")
    s.add_argument("--config", required=True)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--output", default=None)
    s.set_defaults(func=cmd_nbody_run)

    s = sub.add_parser("check-kernels", help="kernel identity table (CSV on stdout)")
    s.set_defaults(func=cmd_check_kernels)

    s = sub.add_parser("diagnose", help="modulated energy of a saved wave function against a saved fluid")
    s.add_argument("--state", required=True)
    s.add_argument("--fluid", required=True)
    s.add_argument("--n", type=int, default=None, help="also report the factorized N-body functional")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("wigner", help="Wigner and Husimi grids of a saved 1-D wave function")
    s.add_argument("--state", required=True)
    s.add_argument("--xi-points", type=int, default=None)
    s.add_argument("--xi-max", type=float, default=None)
    s.add_argument("--output", default=None)
    s.set_defaults(func=cmd_wigner)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigurationError, InputError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LabError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
