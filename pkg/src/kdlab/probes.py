"""Stock probe densities shared by the inequality suites and the solver tests.

Each builder returns a Density on the caller's grid; nothing is normalized
unless the name says so.  The registry at the bottom is what the command-line
driver resolves ``--probe NAME`` against.
"""

from __future__ import annotations

import numpy as np

from .vgrid import Density, GridSpec

__all__ = [
    "maxwellian",
    "two_bumps",
    "heavy_tail",
    "indicator_ball",
    "build_probe",
    "PROBES",
]


def _radius_sq(grid: GridSpec, center=None) -> np.ndarray:
    if center is None:
        center = np.zeros(grid.d)
    center = np.asarray(center, dtype=float)
    if center.shape != (grid.d,):
        raise ValueError("center must have %d components" % grid.d)
    rsq = np.zeros(grid.shape())
    for i, c in enumerate(grid.mesh()):
        rsq = rsq + (c - center[i]) ** 2
    return rsq


def maxwellian(grid: GridSpec, amplitude: float = 1.0, width: float = 1.0,
               center=None) -> Density:
    """amplitude * exp(-|v - center|^2 / width^2)."""
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    return Density(grid, amplitude * np.exp(-_radius_sq(grid, center) / width ** 2))


def two_bumps(grid: GridSpec, offset: float = 1.5,
              amplitude: float = 1.0) -> Density:
    """Two unit-width bumps centered at +-offset along the first axis."""
    c = np.zeros(grid.d)
    c[0] = offset
    vals = np.exp(-_radius_sq(grid, c)) + np.exp(-_radius_sq(grid, -c))
    return Density(grid, amplitude * vals)


def heavy_tail(grid: GridSpec, amplitude: float = 1.0,
               decay: float = 5.0) -> Density:
    """Polynomial tail amplitude * <v>^{-decay}.

    decay > d + 2 keeps mass and energy finite, which every downstream hydro
    guard assumes.
    """
    if decay <= grid.d + 2:
        raise ValueError("decay must exceed d + 2 for finite energy")
    return Density(grid, amplitude * grid.bracket() ** (-float(decay)))


def indicator_ball(grid: GridSpec, radius: float = 1.0, amplitude: float = 1.0,
                   center=None) -> Density:
    if radius <= 0:
        raise ValueError("radius must be positive")
    vals = np.where(_radius_sq(grid, center) <= radius ** 2, float(amplitude), 0.0)
    return Density(grid, vals)


PROBES = {
    "maxwellian": maxwellian,
    "two-bumps": two_bumps,
    "heavy-tail": heavy_tail,
    "indicator": indicator_ball,
}


def build_probe(name: str, grid: GridSpec, **kwargs) -> Density:
    if name not in PROBES:
        raise ValueError("unknown probe %r; choices: %s"
                         % (name, ", ".join(sorted(PROBES))))
    return PROBES[name](grid, **kwargs)
