"""Experiment configuration: TOML schema, validation and a stable hash.

Canonical schema (all sections required unless marked optional)::

    [grid]
    dim = 3
    points_per_axis = 48
    box_length = 12.0
    dealias_fraction = 0.6666666666666666   # optional

    [run]
    t_final = 0.5
    dt = 0.01
    seed = 7
    output_dir = "runs/demo"
    gronwall_c = 10.0          # optional, default 10
    sample_every = 10          # optional, steps between diagnostic rows

    [sweep]
    hbar_list = [0.5, 0.25, 0.125, 0.0625]   # strictly decreasing
    n_list = [64, 256, 1024, 4096]            # strictly increasing
    replicas = 8                              # optional, N-body draws per N

    [initial_density]
    profile = "gaussian"       # or "uniform"
    sigma = 1.0

    [initial_phase]
    profile = "expanding"      # or "zero", "plane_wave"
    amplitude = 0.5
    width = 1.5

    [modes]                    # optional
    free_space = false         # N-body without periodic images
    self_consistent = true     # Hartree second half kick from the updated density
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grid import GridSpec, ScalarField
from .profiles import density_profile, phase_profile

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ExperimentConfig", "load_config", "parse_config"]


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec
    hbar_list: tuple[float, ...]
    n_list: tuple[int, ...]
    t_final: float
    dt: float
    initial_density: dict
    initial_phase: dict
    seed: int
    output_dir: Path
    gronwall_c: float = 10.0
    sample_every: int = 10
    replicas: int = 1
    free_space: bool = False
    self_consistent: bool = True
    raw: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if not self.t_final > 0:
            raise ConfigurationError("t_final must be positive")
        if not 0 < self.dt <= self.t_final:
            raise ConfigurationError("dt must lie in (0, t_final]")
        steps = self.t_final / self.dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigurationError("t_final must be an integer multiple of dt")
        if any(h <= 0 for h in self.hbar_list):
            raise ConfigurationError("hbar values must be positive")
        if any(b >= a for a, b in zip(self.hbar_list, self.hbar_list[1:])):
            raise ConfigurationError("hbar_list must be strictly decreasing")
        if any(n < 1 for n in self.n_list):
            raise ConfigurationError("particle numbers must be positive")
        if any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ConfigurationError("n_list must be strictly increasing")
        if self.sample_every < 1 or self.replicas < 1:
            raise ConfigurationError("sample_every and replicas must be positive")
        if self.n_steps % self.sample_every:
            raise ConfigurationError("sample_every must divide the number of time steps")
        if not self.gronwall_c > 0:
            raise ConfigurationError("gronwall_c must be positive")
        rho = self.density()
        if rho.values.min() < 0:
            raise ConfigurationError("initial density must be nonnegative")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def density(self) -> ScalarField:
        params = {k: v for k, v in self.initial_density.items() if k != "profile"}
        try:
            return density_profile(self.grid, self.initial_density.get("profile", "gaussian"), **params)
        except TypeError as exc:
            raise ConfigurationError(f"bad [initial_density] parameters: {exc}") from None

    def phase(self, hbar: float) -> ScalarField:
        """The WKB phase ``S``; only the plane-wave profile depends on ``hbar``."""
        name = self.initial_phase.get("profile", "zero")
        params = {k: v for k, v in self.initial_phase.items() if k != "profile"}
        if name == "plane_wave":
            params["hbar"] = hbar
        try:
            return phase_profile(self.grid, name, **params)
        except TypeError as exc:
            raise ConfigurationError(f"bad [initial_phase] parameters: {exc}") from None

    def config_hash(self) -> str:
        """Hash of everything that affects results; ``run.output_dir`` is left out."""
        raw = copy.deepcopy(self.raw)
        raw.get("run", {}).pop("output_dir", None)
        canonical = json.dumps(_canonical(raw), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def seed_for(self, *keys: int) -> int:
        """Independent, reproducible integer seed for a sub-run."""
        return int(np.random.SeedSequence([self.seed, *keys]).generate_state(1)[0])


def _canonical(obj):
    if isinstance(obj, dict):
        return {k: _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, float):
        return repr(obj)
    return obj


def _section(raw: dict, name: str, required: bool = True) -> dict:
    sec = raw.get(name)
    if sec is None:
        if required:
            raise ConfigurationError(f"missing [{name}] section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigurationError(f"[{name}] must be a table")
    return sec


def _get(sec: dict, key: str, kind, where: str, default=...):
    if key not in sec:
        if default is ...:
            raise ConfigurationError(f"missing key {where}.{key}")
        return default
    val = sec[key]
    try:
        if kind is float and isinstance(val, bool):
            raise TypeError
        out = kind(val)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{where}.{key} has invalid value {val!r}") from None
    if kind is float and not math.isfinite(out):
        raise ConfigurationError(f"{where}.{key} must be finite")
    return out


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a parsed TOML document and build an ``ExperimentConfig``.

    A relative ``output_dir`` is taken relative to the working directory.
    """
    raw = copy.deepcopy(raw)
    g = _section(raw, "grid")
    run = _section(raw, "run")
    sw = _section(raw, "sweep", required=False)
    dens = _section(raw, "initial_density")
    phase = _section(raw, "initial_phase", required=False) or {"profile": "zero"}
    modes = _section(raw, "modes", required=False)
    known = {"grid", "run", "sweep", "initial_density", "initial_phase", "modes"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown sections: {sorted(unknown)}")

    grid = GridSpec(
        _get(g, "dim", int, "grid"),
        _get(g, "points_per_axis", int, "grid"),
        _get(g, "box_length", float, "grid"),
        _get(g, "dealias_fraction", float, "grid", 2.0 / 3.0),
    )
    try:
        hbar_list = tuple(float(h) for h in sw.get("hbar_list", [1.0]))
        n_list = tuple(int(n) for n in sw.get("n_list", [64]))
    except (TypeError, ValueError):
        raise ConfigurationError("hbar_list / n_list must be lists of numbers") from None
    out = Path(run.get("output_dir", "runs"))
    return ExperimentConfig(
        grid=grid,
        hbar_list=hbar_list,
        n_list=n_list,
        t_final=_get(run, "t_final", float, "run"),
        dt=_get(run, "dt", float, "run"),
        initial_density=dict(dens),
        initial_phase=dict(phase),
        seed=_get(run, "seed", int, "run", 0),
        output_dir=out,
        gronwall_c=_get(run, "gronwall_c", float, "run", 10.0),
        sample_every=_get(run, "sample_every", int, "run", 10),
        replicas=_get(sw, "replicas", int, "sweep", 1),
        free_space=bool(modes.get("free_space", False)),
        self_consistent=bool(modes.get("self_consistent", True)),
        raw=raw,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None
    return parse_config(raw)
