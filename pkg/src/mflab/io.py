"""State files (``.npz``) and CSV writing with fixed column order."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .euler_poisson import FluidState
from .grid import GridSpec, ScalarField, VectorField, WaveField

__all__ = ["save_wave", "save_fluid", "load_state", "write_csv", "format_value"]


def _grid_meta(grid: GridSpec) -> dict:
    return dict(
        dim=grid.dim,
        points_per_axis=grid.points_per_axis,
        box_length=grid.box_length,
        dealias_fraction=grid.dealias_fraction,
    )


def save_wave(path, psi: WaveField, time: float = 0.0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, kind="wave", psi=psi.values, hbar=psi.hbar, time=time, **_grid_meta(psi.grid))
    return path


def save_fluid(path, fluid: FluidState) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, kind="fluid", rho=fluid.rho.values, u=fluid.u.components, time=fluid.time, **_grid_meta(fluid.grid))
    return path


def load_state(path):
    """Return a ``(WaveField, time)`` pair or a ``FluidState`` depending on the file."""
    try:
        with np.load(path, allow_pickle=False) as data:
            kind = str(data["kind"])
            grid = GridSpec(
                int(data["dim"]),
                int(data["points_per_axis"]),
                float(data["box_length"]),
                float(data["dealias_fraction"]),
            )
            if kind == "wave":
                return WaveField(grid, float(data["hbar"]), data["psi"]), float(data["time"])
            if kind == "fluid":
                return FluidState(ScalarField(grid, data["rho"]), VectorField(grid, data["u"]), float(data["time"]))
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigurationError(f"cannot read state file {path}: {exc}") from None
    raise ConfigurationError(f"unknown state kind {kind!r} in {path}")


def format_value(v) -> str:
    """Round-trip exact text for floats, so identical runs give identical bytes."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_csv(path_or_stream, columns: Sequence[str], rows: Iterable[dict]) -> None:
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c, math.nan)) for c in columns])

    if hasattr(path_or_stream, "write"):
        emit(path_or_stream)
        return
    path = Path(path_or_stream)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        emit(fh)
