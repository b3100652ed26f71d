"""Coupled runs (Hartree next to Euler-Poisson, N-body next to Euler-Poisson),
parameter sweeps and log-log rate fitting.

Every diagnostic row carries ``run_id``, ``version`` and ``config_hash``.
Results depend only on the configuration and seed: sweeps dispatch
independent runs to a process pool, and aggregation is keyed by parameter, so
the worker count never changes a number.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .diagnostics import g_functional, gronwall_monitor
from .ensemble import (
    ParticleSystem,
    battery_discrepancies,
    classical_energy,
    configuration_energy,
    monokinetic_sample,
    nbody_run,
    test_function_battery,
)
from .errors import BlowUpError, InputError, LabError, NearCollisionError, StepSizeError
from .euler_poisson import (
    EulerPoissonSolver,
    FluidState,
    fluid_energy,
    regularity_monitor,
    wkb_initializer,
)
from .hartree import HartreeSolver, HartreeState, continuity_residual, hartree_energy
from .io import write_csv
from .phase_space import monokinetic_concentration, wigner_transform

__all__ = [
    "WORKERS_ENV",
    "RunSeries",
    "SweepResult",
    "fluid_trajectory",
    "run_coupled",
    "run_nbody_vs_fluid",
    "sweep",
    "loglog_fit",
    "worker_count",
    "COUPLED_COLUMNS",
    "NBODY_COLUMNS",
]

WORKERS_ENV = "MFLAB_WORKERS"
BATTERY = tuple(test_function_battery(1.0))

COUPLED_COLUMNS = (
    "run_id", "version", "config_hash", "hbar", "time", "mass", "hartree_energy",
    "kinetic_modulated", "potential_gap", "g_total", "gronwall_envelope",
    "continuity_residual", "grad_u_inf", "lap_div_u_inf", "fluid_energy", "monokinetic",
)  # fmt: skip
NBODY_COLUMNS = (
    "run_id", "version", "config_hash", "n", "replica", "time", "classical_energy",
    "kinetic_modulated", "f_n_scaled", "total_modulated_per_particle", "f_prime_n",
    "min_pair_distance", *(f"battery_{name}" for name in BATTERY),
)  # fmt: skip


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return default
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


@dataclass
class RunSeries:
    """Diagnostic time series of one run; ``horizon`` is set when the run stopped early."""

    run_id: str
    rows: list[dict]
    horizon: float | None = None
    failure: str | None = None

    @property
    def terminal(self) -> dict:
        return self.rows[-1] if self.rows else {}


def _sample_steps(config: ExperimentConfig) -> list[int]:
    return list(range(0, config.n_steps + 1, config.sample_every))


def _initial_fluid(config: ExperimentConfig, hbar: float) -> tuple:
    psi, fluid = wkb_initializer(config.density(), config.phase(hbar), hbar)
    return psi, fluid.dealiased()


def fluid_trajectory(config: ExperimentConfig, hbar: float | None = None) -> tuple[dict[int, FluidState], float | None]:
    """Euler-Poisson states at the sample steps, plus the stopping time if the
    regularity monitor flagged blow-up (``None`` otherwise).

    The fluid data is ``hbar``-independent except for plane-wave phases.
    """
    hbar = config.hbar_list[0] if hbar is None else hbar
    _, fluid = _initial_fluid(config, hbar)
    solver = EulerPoissonSolver()
    threshold = 50.0 / config.t_final
    samples = set(_sample_steps(config))
    states = {0: fluid}
    for step in range(1, config.n_steps + 1):
        try:
            fluid = solver.step(fluid, config.dt)
        except BlowUpError as exc:
            return states, exc.last_valid_time
        if regularity_monitor(fluid, threshold).blow_up_flag:
            return states, fluid.time
        if step in samples:
            states[step] = fluid
    return states, None


def run_coupled(
    config: ExperimentConfig, hbar: float, fluid_states: dict[int, FluidState] | None = None
) -> RunSeries:
    """Hartree and Euler-Poisson side by side from matched WKB data."""
    run_id = f"hbar-{hbar:g}"
    horizon = None
    if fluid_states is None or config.initial_phase.get("profile") == "plane_wave":
        fluid_states, horizon = fluid_trajectory(config, hbar)
    psi, _ = _initial_fluid(config, hbar)
    solver = HartreeSolver(self_consistent=config.self_consistent)
    state = HartreeState(psi)
    samples = set(_sample_steps(config))
    n_avail = max(fluid_states)
    if n_avail < config.n_steps:
        horizon = fluid_states[n_avail].time

    history = [state]
    reports, norms, rows = [], [], []
    pending = None  # a sampled Hartree state waiting for its successor (continuity residual)
    for step in range(0, min(config.n_steps, n_avail) + 1):
        if step > 0:
            try:
                state = solver.step(state, config.dt)
            except LabError as exc:
                return RunSeries(run_id, rows, horizon=state.time, failure=str(exc))
            history = (history + [state])[-3:]
        if pending is not None:
            pending["continuity_residual"] = continuity_residual(history)
            pending = None
        if step not in samples:
            continue
        fluid = fluid_states[step]
        rep = g_functional(state.psi, fluid)
        mon = regularity_monitor(fluid)
        reports.append(rep)
        norms.append(mon)
        energy = hartree_energy(state, solver)
        mono = math.nan
        if config.grid.dim == 1:
            mono = monokinetic_concentration(wigner_transform(state.psi), fluid)
        row = dict(
            run_id=run_id,
            version=__version__,
            config_hash=config.config_hash(),
            hbar=hbar,
            time=state.time,
            mass=state.psi.norm2(),
            hartree_energy=energy.total,
            kinetic_modulated=rep.kinetic_modulated,
            potential_gap=rep.potential_gap,
            g_total=rep.g_total,
            continuity_residual=math.nan,
            grad_u_inf=mon.grad_u_inf,
            lap_div_u_inf=mon.laplacian_div_u_inf,
            fluid_energy=fluid_energy(fluid),
            monokinetic=mono,
        )
        rows.append(row)
        if step > 0:
            pending = row
    if reports:
        check = gronwall_monitor(reports, norms, c_growth=config.gronwall_c)
        for row, env in zip(rows, check.envelopes):
            row["gronwall_envelope"] = env
    return RunSeries(run_id, rows, horizon=horizon)


def run_nbody_vs_fluid(
    config: ExperimentConfig, n: int, replica: int = 0, fluid_states: dict[int, FluidState] | None = None
) -> RunSeries:
    """Monokinetic N-body run next to the fluid, with configuration diagnostics."""
    run_id = f"n-{n}-r{replica}"
    horizon = None
    if fluid_states is None:
        fluid_states, horizon = fluid_trajectory(config)
    f0 = fluid_states[0]
    seed = config.seed_for(n, replica)
    ps = monokinetic_sample(f0.rho, f0.u, n, seed)
    if config.free_space:
        ps = ParticleSystem(ps.positions, ps.velocities, ps.box_length, seed=seed, periodic=False)
    samples = _sample_steps(config)
    rows = []

    def record(ps: ParticleSystem, fluid: FluidState):
        row = dict(
            run_id=run_id, version=__version__, config_hash=config.config_hash(), n=n, replica=replica, time=ps.time
        )
        row["classical_energy"] = classical_energy(ps) if n >= 2 else math.nan
        row["min_pair_distance"] = ps.min_pair_distance if n >= 2 else math.nan
        if ps.periodic:
            ce = configuration_energy(ps, fluid.rho, fluid.u)
            row.update(
                kinetic_modulated=ce.kinetic_modulated,
                f_n_scaled=ce.f_n / n**2,
                total_modulated_per_particle=ce.total_modulated_per_particle,
                f_prime_n=ce.f_prime_n,
            )
            for name, value in battery_discrepancies(ps, fluid.rho).items():
                row[f"battery_{name}"] = value
        rows.append(row)

    record(ps, f0)
    done = 0
    for target in samples[1:]:
        if target not in fluid_states:
            horizon = fluid_states[max(fluid_states)].time
            break
        try:
            ps = nbody_run(ps, config.dt, target - done)
        except (NearCollisionError, StepSizeError) as exc:
            return RunSeries(run_id, rows, horizon=ps.time, failure=str(exc))
        done = target
        record(ps, fluid_states[target])
    return RunSeries(run_id, rows, horizon=horizon)


# --------------------------------------------------------------------------- fitting


def loglog_fit(x, y) -> tuple[float, float, float]:
    """Least-squares line through ``(log x, log y)``: ``(slope, intercept, r^2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise InputError("a rate needs at least three points")
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(y)):
        raise InputError("log-log fit needs positive finite data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


@dataclass
class SweepResult:
    """``rows`` hold ``(parameter, value, time, diagnostic, value)`` records."""

    rows: list[tuple] = field(default_factory=list)
    fitted_rates: dict[str, tuple[float, float, float]] = field(default_factory=dict)
    gates: dict[str, bool] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    runs: dict[str, RunSeries] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures and all(self.gates.values())

    def terminal(self, parameter: str, diagnostic: str) -> dict:
        """Terminal-time value of ``diagnostic`` keyed by parameter value."""
        return {v: val for p, v, t, d, val in self.rows if p == parameter and d == diagnostic and t == "final"}


def _run_task(task):
    kind, config, param, replica, fluid_states = task
    try:
        if kind == "hbar":
            return task[:4], run_coupled(config, param, fluid_states)
        return task[:4], run_nbody_vs_fluid(config, param, replica, fluid_states)
    except LabError as exc:
        return task[:4], RunSeries(f"{kind}-{param}-r{replica}", [], failure=f"{type(exc).__name__}: {exc}")


def sweep(config: ExperimentConfig, workers: int | None = None, write: bool = True, hbar=True, nbody=True) -> SweepResult:
    """Run every ``hbar`` and every ``(N, replica)``; fit terminal-time rates.

    Gates:

    * ``hbar_slope``: slope of ``g_total(t_final)`` against ``hbar`` in ``2 +- 0.3``;
    * ``gronwall``: every coupled run stays under its envelope;
    * ``total_modulated_decreasing``: replica mean of ``|K + F_N/N^2|`` at
      ``t_final`` strictly decreases along ``n_list``;
    * ``battery_decreasing``: replica mean of every battery discrepancy strictly decreases;
    * ``f_negative_exponent``: ``max_replicas (F_N)_-`` grows at most like ``N^{4/3 + 0.15}``.
    """
    if hbar and len(config.hbar_list) < 3:
        raise InputError("an hbar sweep needs at least three values")
    if nbody and len(config.n_list) < 3:
        raise InputError("an N sweep needs at least three values")
    workers = worker_count() if workers is None else workers

    fluid_states, fluid_horizon = fluid_trajectory(config)
    tasks = []
    if hbar:
        tasks += [("hbar", config, h, 0, fluid_states) for h in config.hbar_list]
    if nbody:
        tasks += [("n", config, n, r, fluid_states) for n in config.n_list for r in range(config.replicas)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_run_task, tasks))
    else:
        outputs = [_run_task(t) for t in tasks]

    result = SweepResult()
    if fluid_horizon is not None:
        result.failures["fluid"] = f"regularity horizon reached at t = {fluid_horizon:.6g}"
    for (kind, _, param, replica), series in outputs:
        result.runs[series.run_id] = series
        if series.failure or series.horizon is not None:
            result.failures[series.run_id] = series.failure or f"stopped at t = {series.horizon:.6g}"
    if hbar:
        _summarize_hbar(config, outputs, result)
    if nbody:
        _summarize_nbody(config, outputs, result)
    if write:
        write_sweep(config, result)
    return result


def _summarize_hbar(config, outputs, result):
    finals, envelope_ok = {}, True
    for (kind, _, h, _), s in outputs:
        if kind != "hbar" or not s.rows:
            continue
        for row in s.rows:
            envelope_ok &= row["g_total"] <= row["gronwall_envelope"] * (1 + 1e-12)
            for d in ("g_total", "kinetic_modulated", "potential_gap", "monokinetic"):
                result.rows.append(("hbar", h, row["time"], d, row[d]))
        last = s.terminal
        if math.isclose(last["time"], config.t_final, rel_tol=1e-9):
            finals[h] = last
            for d in ("g_total", "kinetic_modulated", "potential_gap", "monokinetic"):
                result.rows.append(("hbar", h, "final", d, last[d]))
    hs = sorted(finals)
    if len(hs) >= 3:
        result.fitted_rates["g_total~hbar"] = loglog_fit(hs, [finals[h]["g_total"] for h in hs])
        slope = result.fitted_rates["g_total~hbar"][0]
        result.gates["hbar_slope"] = abs(slope - 2.0) <= 0.3
        if config.grid.dim == 1:
            result.fitted_rates["monokinetic~hbar"] = loglog_fit(hs, [finals[h]["monokinetic"] for h in hs])
            result.gates["monokinetic_slope"] = result.fitted_rates["monokinetic~hbar"][0] >= 0.9
    else:
        result.gates["hbar_slope"] = False
    result.gates["gronwall"] = bool(envelope_ok)


def _strictly_decreasing(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _summarize_nbody(config, outputs, result):
    if config.free_space:
        return
    per_n: dict[int, list[dict]] = {}
    initial: dict[int, list[dict]] = {}
    for (kind, _, n, _), s in outputs:
        if kind != "n" or not s.rows:
            continue
        initial.setdefault(n, []).append(s.rows[0])
        if math.isclose(s.terminal["time"], config.t_final, rel_tol=1e-9):
            per_n.setdefault(n, []).append(s.terminal)
    ns = [n for n in config.n_list if n in per_n]
    if len(ns) < 3:
        result.gates["total_modulated_decreasing"] = False
        return

    def mean_of(rows, key, fn=abs):
        return float(np.mean([fn(r[key]) for r in rows]))

    total = [mean_of(per_n[n], "total_modulated_per_particle") for n in ns]
    f0 = [mean_of(initial[n], "f_n_scaled") for n in ns]
    f_neg = [max(max(0.0, -r["f_n_scaled"] * n**2) for r in per_n[n]) for n in ns]
    for n, t, f, fn in zip(ns, total, f0, f_neg):
        result.rows += [
            ("n", n, "final", "abs_total_modulated", t),
            ("n", n, 0.0, "abs_f_n_scaled", f),
            ("n", n, "final", "f_n_negative_max", fn),
        ]
    result.fitted_rates["abs_total_modulated~n"] = loglog_fit(ns, total)
    result.fitted_rates["abs_f_n_scaled_t0~n"] = loglog_fit(ns, f0)
    result.gates["total_modulated_decreasing"] = _strictly_decreasing(total)
    if all(v > 0 for v in f_neg):
        result.fitted_rates["f_n_negative~n"] = loglog_fit(ns, f_neg)
        result.gates["f_negative_exponent"] = result.fitted_rates["f_n_negative~n"][0] <= 4 / 3 + 0.15
    battery_ok = True
    for name in BATTERY:
        key = f"battery_{name}"
        vals = [mean_of(per_n[n], key) for n in ns]
        for n, v in zip(ns, vals):
            result.rows.append(("n", n, "final", key, v))
        result.fitted_rates[f"{key}~n"] = loglog_fit(ns, vals)
        battery_ok &= _strictly_decreasing(vals)
    result.gates["battery_decreasing"] = bool(battery_ok)


def write_sweep(config: ExperimentConfig, result: SweepResult) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for run_id, series in result.runs.items():
        columns = COUPLED_COLUMNS if run_id.startswith("hbar") else NBODY_COLUMNS
        write_csv(out / f"{run_id}.csv", columns, series.rows)
    meta = dict(run_id="sweep", version=__version__, config_hash=config.config_hash())
    summary = [dict(meta, parameter=p, value=v, time=t, diagnostic=d, result=val) for p, v, t, d, val in result.rows]
    write_csv(
        out / "summary.csv",
        ("run_id", "version", "config_hash", "parameter", "value", "time", "diagnostic", "result"),
        summary,
    )
    (out / "report.txt").write_text(format_report(config, result))
    return out


def format_report(config: ExperimentConfig, result: SweepResult) -> str:
    lines = [f"mflab {__version__}  config {config.config_hash()}", "", "fitted log-log rates:"]
    for name, (slope, intercept, r2) in sorted(result.fitted_rates.items()):
        lines.append(f"  {name:32s} slope {slope:+.4f}  intercept {intercept:+.4f}  r2 {r2:.4f}")
    lines += ["", "gates:"]
    lines += [f"  {name:32s} {'PASS' if ok else 'FAIL'}" for name, ok in sorted(result.gates.items())]
    if result.failures:
        lines += ["", "failures:"] + [f"  {k}: {v}" for k, v in sorted(result.failures.items())]
    return "\n".join(lines) + "\n"
