"""Explicit kinetic stepping: space-homogeneous relaxation and a 1-D slab
with wall boundary conditions over the full velocity lattice.

The slab deliberately couples one space dimension to the d-dimensional
velocity grid; transport is first-order upwind with ghost cells synthesized
by the wall conditions, collisions are stepped cell by cell with Strang
splitting.  Negative values produced by an explicit step are clipped and the
clipped mass is part of every budget this module reports.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .collision import SigmaQuadrature, q_sigma_form
from .exponents import HydroBounds, KernelParams
from .vgrid import (Density, GridSpec, entropy, load_binary, moments, sample,
                    save_binary)

__all__ = [
    "DomainSpec",
    "BoundarySpec",
    "State",
    "Trajectory",
    "cmu_normalization",
    "maxwellian_wall",
    "apply_bc",
    "transport_step",
    "step_homogeneous",
    "run",
    "save_trajectory",
    "load_trajectory",
]

_BC_KINDS = ("inflow", "bounce-back", "specular", "diffuse", "maxwell")


@dataclass(frozen=True)
class DomainSpec:
    """Spatial layout; the outward normal is -e1 at x = 0 and +e1 at x = L."""

    geometry: str = "homogeneous"
    L: float = 1.0
    Nx: int = 1

    def __post_init__(self):
        if self.geometry not in ("homogeneous", "slab"):
            raise ValueError("geometry must be homogeneous or slab")
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.geometry == "slab" and self.Nx < 2:
            raise ValueError("slab needs at least 2 cells")

    @property
    def x_cell(self) -> float:
        return self.L / self.Nx


@dataclass(frozen=True)
class BoundarySpec:
    """One wall condition; g_b is the inflow datum, iota the accommodation
    fraction of the maxwell condition."""

    kind: str
    g_b: object = None
    iota: float = 0.0

    def __post_init__(self):
        if self.kind not in _BC_KINDS:
            raise ValueError("kind must be one of %s" % (_BC_KINDS,))
        if not 0.0 <= self.iota <= 1.0:
            raise ValueError("iota must lie in [0, 1]")
        if self.kind == "inflow":
            if self.g_b is None:
                raise ValueError("inflow needs a boundary datum")
            if np.any(np.asarray(self.g_b) < 0):
                raise ValueError("boundary datum must be non-negative")


@dataclass
class State:
    """Kinetic state: one velocity distribution per space cell."""

    t: float
    values: np.ndarray
    grid: GridSpec
    x_cell: float = 1.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape[1:] != self.grid.shape():
            raise ValueError("velocity axes %r do not match the grid %r"
                             % (vals.shape[1:], self.grid.shape()))
        if not np.all(np.isfinite(vals)):
            raise ValueError("state values must be finite")
        if np.any(vals < 0):
            raise ValueError("state values must be non-negative")
        self.values = vals

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    def cell_density(self, i: int) -> Density:
        return Density(self.grid, self.values[i])


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    hydro: dict = field(default_factory=lambda: {
        "t": [], "mass": [], "momentum_x": [], "energy": [], "entropy": [],
        "clipped_mass": []})
    notes: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# wall machinery


def maxwellian_wall(grid: GridSpec) -> np.ndarray:
    """Unit-temperature wall profile exp(-|v|^2) on the lattice."""
    return np.exp(-(grid.bracket() ** 2 - 1.0))


def cmu_normalization(grid: GridSpec) -> float:
    """Inverse of the half-space flux of the wall Maxwellian.

    The lattice flux sum over v1 > 0 misses h^2/12 times the transverse mass
    of the v1 = 0 row (the integrand v1 exp(-|v|^2) has slope one there);
    adding that end correction makes the quadrature fourth-order, which the
    2/sqrt(pi) check in d = 2 relies on.
    """
    mu = maxwellian_wall(grid)
    v1 = grid.mesh()[0]
    h = grid.h
    raw = float(np.sum(np.where(v1 > 0, mu * v1, 0.0)) * grid.cell)
    wall_row = float(np.sum(np.where(v1 == 0, mu, 0.0)) * h ** (grid.d - 1))
    flux = raw + h ** 2 / 12.0 * wall_row
    if flux <= 0:
        raise ValueError("wall flux vanished on this grid")
    return 1.0 / flux


def _incoming_sign(side: str) -> float:
    if side == "left":
        return 1.0
    if side == "right":
        return -1.0
    raise ValueError("side must be left or right")


def _reverse_all(vals: np.ndarray, d: int) -> np.ndarray:
    return vals[(slice(None, None, -1),) * d]


def _diffuse_ghost(wall: np.ndarray, grid: GridSpec, sgn: float) -> np.ndarray:
    """Wall-Maxwellian re-emission normalized on the raw lattice flux.

    The normalization divides by the lattice sum of the incoming mu-flux
    rather than the corrected physical flux, so the re-emitted mass flux
    matches the outgoing one to rounding on every step.
    """
    mu = maxwellian_wall(grid)
    v1 = grid.mesh()[0]
    out_flux = float(np.sum(np.where(sgn * v1 < 0, wall * np.abs(v1), 0.0))
                     * grid.cell)
    mu_flux = float(np.sum(np.where(sgn * v1 > 0, mu * np.abs(v1), 0.0))
                    * grid.cell)
    if mu_flux <= 0:
        raise ValueError("wall flux vanished on this grid")
    return mu * (out_flux / mu_flux)


def apply_bc(state: State, spec: BoundarySpec, side: str) -> np.ndarray:
    """Ghost-cell distribution outside the named wall.

    Only the incoming half (v pointing into the domain) is synthesized by
    the condition; the outgoing half copies the wall cell, which the upwind
    stencil never reads.
    """
    grid = state.grid
    wall = state.values[0] if side == "left" else state.values[-1]
    sgn = _incoming_sign(side)
    v1 = grid.mesh()[0]
    incoming = sgn * v1 > 0
    kind = spec.kind
    if kind == "inflow":
        ghost_in = np.broadcast_to(np.asarray(spec.g_b, dtype=float),
                                   grid.shape())
    elif kind == "bounce-back":
        ghost_in = _reverse_all(wall, grid.d)
    elif kind == "specular":
        ghost_in = wall[::-1]
    elif kind == "diffuse":
        ghost_in = _diffuse_ghost(wall, grid, sgn)
    else:
        spec_part = wall[::-1]
        diff_part = _diffuse_ghost(wall, grid, sgn)
        ghost_in = (1.0 - spec.iota) * spec_part + spec.iota * diff_part
    return np.where(incoming, ghost_in, wall)


def wall_flux(state: State, side: str) -> tuple:
    """(outgoing, incoming-slot) mass fluxes of the wall cell itself."""
    grid = state.grid
    wall = state.values[0] if side == "left" else state.values[-1]
    sgn = _incoming_sign(side)
    v1 = grid.mesh()[0]
    out = float(np.sum(np.where(sgn * v1 < 0, wall * np.abs(v1), 0.0))
                * grid.cell)
    inc = float(np.sum(np.where(sgn * v1 > 0, wall * np.abs(v1), 0.0))
                * grid.cell)
    return out, inc


# ---------------------------------------------------------------------------
# stepping


def transport_step(state: State, dt: float, bc_left: BoundarySpec,
                   bc_right: BoundarySpec) -> State:
    """First-order upwind advection x' = v1 with ghost cells from the walls."""
    grid = state.grid
    hx = state.x_cell
    v1 = grid.mesh()[0]
    vmax = float(np.max(np.abs(v1)))
    if dt * vmax / hx > 1.0 + 1e-12:
        raise ValueError("CFL violated: dt max|v1| / hx = %g > 1"
                         % (dt * vmax / hx))
    ghost_l = apply_bc(state, bc_left, "left")
    ghost_r = apply_bc(state, bc_right, "right")
    vals = state.values
    left_sh = np.concatenate([ghost_l[None], vals[:-1]], axis=0)
    right_sh = np.concatenate([vals[1:], ghost_r[None]], axis=0)
    diff = np.where(v1[None] >= 0, vals - left_sh, right_sh - vals)
    new = vals - (dt / hx) * v1[None] * diff
    new = np.maximum(new, 0.0)
    return State(t=state.t + dt, values=new, grid=grid, x_cell=hx)


def _renormalize(fnew: Density, mass0: float, mom0: np.ndarray,
                 energy0: float, tol: float = 1e-10,
                 max_iter: int = 40) -> Density:
    """Shift the mean and rescale mass and centered energy back to targets.

    One pass resamples g(v) = (m0/m1) lam^d f(u1 + lam (v - u0)), which is
    exact in the continuum; lattice interpolation leaves a residual
    proportional to lam - 1, so the map is iterated to its fixed point and
    each pass ends with an exact scalar mass correction.
    """
    grid = fnew.grid
    if mass0 <= 0:
        return fnew
    pts = grid.points()
    u0 = mom0 / mass0
    e0c = energy0 - mass0 * float(u0 @ u0)
    cur = fnew
    for _ in range(max_iter):
        m1, mom1, e1 = moments(cur)
        if m1 <= 0:
            return cur
        u1 = mom1 / m1
        e1c = e1 - m1 * float(u1 @ u1)
        if e0c <= 0 or e1c <= 0:
            return cur
        lam = math.sqrt(e1c * mass0 / (e0c * m1))
        shift = float(np.max(np.abs(u1 - u0)))
        if abs(lam - 1.0) < tol and shift < tol and \
                abs(m1 - mass0) < tol * mass0:
            break
        mapped = u1[None, :] + lam * (pts - u0[None, :])
        vals = lam ** grid.d * sample(cur, mapped)
        vals = np.maximum(vals, 0.0).reshape(grid.shape())
        cur = Density(grid, vals)
        m2 = moments(cur)[0]
        if m2 > 0:
            cur = Density(grid, cur.values * (mass0 / m2))
    return cur


def step_homogeneous(f: Density, dt: float, params: KernelParams,
                     quad: SigmaQuadrature = None, btilde=None,
                     renormalize: bool = False, floor: float = 1e-3):
    """One explicit collision step f <- max(0, f + dt Q(f, f)).

    Returns (new density, info).  dt must not exceed the depletion time
    dt_stable = min f / |Q|_- estimated on the mass-carrying nodes
    (f above floor times its maximum; below that the conservation
    projection decouples Q from f and clipping absorbs the defect, which
    is why the clipped mass is part of every budget).  A non-finite
    collision output aborts with diagnostics instead of propagating.
    """
    out = q_sigma_form(f, params, quad=quad, btilde=btilde)
    q = out.q_values
    if not np.all(np.isfinite(q)):
        bad = int(np.sum(~np.isfinite(q)))
        raise RuntimeError("collision output has %d non-finite nodes; "
                           "max f = %g, diagnostics %r"
                           % (bad, float(np.max(f.values)), out.diagnostics))
    fmax = float(np.max(f.values))
    neg = (q < 0) & (f.values >= floor * fmax)
    if np.any(neg):
        dt_stable = float(np.min(f.values[neg] / -q[neg]))
    else:
        dt_stable = math.inf
    if dt > dt_stable:
        raise ValueError("dt = %g exceeds the depletion bound %g"
                         % (dt, dt_stable))
    raw = f.values + dt * q
    clipped = float(np.sum(np.maximum(-raw, 0.0)) * f.grid.cell)
    fnew = Density(f.grid, np.maximum(raw, 0.0))
    mass0, mom0, energy0 = moments(f)
    if renormalize:
        fnew = _renormalize(fnew, mass0, mom0, energy0)
    info = {"dt_stable": dt_stable, "clipped_mass": clipped,
            "collision_diagnostics": out.diagnostics}
    return fnew, info


# ---------------------------------------------------------------------------
# full runs


def _hydro_row(traj: Trajectory, t: float, f, x_weight: float,
               clipped: float):
    if isinstance(f, Density):
        mass, mom, energy = moments(f)
        ent = entropy(f)
    else:
        mass = mom = energy = ent = 0.0
        for i in range(f.n_cells):
            cd = f.cell_density(i)
            m, mm, e = moments(cd)
            mass += m * x_weight
            mom = mom + mm * x_weight
            energy += e * x_weight
            ent += entropy(cd) * x_weight
        mom = np.asarray(mom)
    traj.hydro["t"].append(t)
    traj.hydro["mass"].append(mass)
    traj.hydro["momentum_x"].append(float(np.asarray(mom).ravel()[0]))
    traj.hydro["energy"].append(energy)
    traj.hydro["entropy"].append(ent)
    traj.hydro["clipped_mass"].append(clipped)


def _snapshot_due(t_prev: float, t_now: float, wanted) -> list:
    return [tw for tw in wanted if t_prev < tw <= t_now + 1e-12]


def _check_inflow_guard(spec: BoundarySpec, grid: GridSpec, Cb: float,
                        beta: float, q: float, t: float) -> bool:
    if spec is None or spec.kind != "inflow":
        return True
    ceiling = Cb * (1.0 + t ** (-beta)) * grid.bracket() ** (-q)
    return bool(np.all(np.asarray(spec.g_b) <= ceiling + 1e-15))


def run(initial, params: KernelParams, dt: float, t_end: float,
        snapshot_times=(), domain: DomainSpec = None,
        bc_left: BoundarySpec = None, bc_right: BoundarySpec = None,
        quad: SigmaQuadrature = None, btilde=None,
        renormalize: bool = False, hydro_bounds: HydroBounds = None,
        inflow_guard: dict = None, t_start: float = 0.0) -> Trajectory:
    """March the kinetic equation and collect snapshots and hydro series.

    Homogeneous runs take a Density and step collisions only; slab runs
    take a State and use Strang splitting (half transport, collision, half
    transport).  Snapshot times are rounded up to the first step boundary
    that reaches them; the initial state is always stored.
    """
    if domain is None:
        domain = DomainSpec()
    homogeneous = domain.geometry == "homogeneous"
    if homogeneous and not isinstance(initial, Density):
        raise ValueError("homogeneous runs start from a Density")
    if not homogeneous and not isinstance(initial, State):
        raise ValueError("slab runs start from a State")
    if not homogeneous and (bc_left is None or bc_right is None):
        raise ValueError("slab runs need both wall conditions")
    traj = Trajectory()
    traj.notes["renormalize"] = renormalize
    traj.notes["hydro_flags"] = []
    if inflow_guard is not None:
        # the ceiling decays in t, so the end of the run is the tight check
        ok = all(_check_inflow_guard(bc, initial.grid, t=t_end,
                                     **inflow_guard)
                 for bc in (bc_left, bc_right))
        traj.notes["inflow_guard_ok"] = ok
    t = t_start
    current = initial
    wanted = sorted(float(tw) for tw in snapshot_times)
    traj.times.append(t)
    traj.states.append(current)
    _hydro_row(traj, t, current,
               1.0 if homogeneous else domain.x_cell, 0.0)
    n_steps = int(round((t_end - t_start) / dt))
    for k in range(n_steps):
        t_prev = t
        clipped = 0.0
        if homogeneous:
            current, info = step_homogeneous(current, dt, params, quad,
                                             btilde, renormalize)
            clipped = info["clipped_mass"]
        else:
            half = transport_step(current, 0.5 * dt, bc_left, bc_right)
            cells = np.empty_like(half.values)
            for i in range(half.n_cells):
                cd, info = step_homogeneous(half.cell_density(i), dt, params,
                                            quad, btilde, renormalize)
                cells[i] = cd.values
                clipped += info["clipped_mass"] * domain.x_cell
            mid = State(t=half.t, values=cells, grid=half.grid,
                        x_cell=half.x_cell)
            current = transport_step(mid, 0.5 * dt, bc_left, bc_right)
            current = State(t=t_prev + dt, values=current.values,
                            grid=current.grid, x_cell=current.x_cell)
        t = t_prev + dt
        due = _snapshot_due(t_prev, t, wanted)
        if due:
            traj.times.append(t)
            traj.states.append(current)
        _hydro_row(traj, t, current,
                   1.0 if homogeneous else domain.x_cell, clipped)
        if hydro_bounds is not None:
            ref = current if homogeneous else _mean_density(current)
            from .vgrid import hydro_check
            if not hydro_check(ref, hydro_bounds):
                traj.notes["hydro_flags"].append(t)
    return traj


def _mean_density(state: State) -> Density:
    return Density(state.grid, np.mean(state.values, axis=0))


# ---------------------------------------------------------------------------
# persistence


def save_trajectory(traj: Trajectory, path: str) -> None:
    """Directory layout: manifest.json, hydro.csv, snap####[_cell####].kdb."""
    os.makedirs(path, exist_ok=True)
    manifest = {"times": [float(t) for t in traj.times],
                "notes": traj.notes, "files": []}
    for k, (t, st) in enumerate(zip(traj.times, traj.states)):
        if isinstance(st, Density):
            name = "snap%04d.kdb" % k
            save_binary(st, os.path.join(path, name))
            manifest["files"].append([name])
        else:
            row = []
            for i in range(st.n_cells):
                name = "snap%04d_cell%04d.kdb" % (k, i)
                save_binary(st.cell_density(i), os.path.join(path, name))
                row.append(name)
            manifest["files"].append(row)
            manifest.setdefault("x_cell", st.x_cell)
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    with open(os.path.join(path, "hydro.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        cols = ["t", "mass", "momentum_x", "energy", "entropy",
                "clipped_mass"]
        writer.writerow(cols)
        for row in zip(*[traj.hydro[c] for c in cols]):
            writer.writerow(["%.17g" % x for x in row])


def load_trajectory(path: str) -> Trajectory:
    with open(os.path.join(path, "manifest.json")) as fh:
        manifest = json.load(fh)
    traj = Trajectory()
    traj.notes = manifest.get("notes", {})
    for t, row in zip(manifest["times"], manifest["files"]):
        traj.times.append(float(t))
        dens = [load_binary(os.path.join(path, name)) for name in row]
        if len(dens) == 1:
            traj.states.append(dens[0])
        else:
            vals = np.stack([d.values for d in dens], axis=0)
            traj.states.append(State(t=float(t), values=vals,
                                     grid=dens[0].grid,
                                     x_cell=float(manifest["x_cell"])))
    with open(os.path.join(path, "hydro.csv")) as fh:
        reader = csv.reader(fh)
        cols = next(reader)
        for col in cols:
            traj.hydro.setdefault(col, [])
            traj.hydro[col].clear()
        for row in reader:
            for col, val in zip(cols, row):
                traj.hydro[col].append(float(val))
    return traj
