"""Truncated uniform velocity lattice with weighted norms, moments, entropy,
and the singular convolution against |v|^gamma.

Grid functions live on the cube [-R, R]^d with an odd number of nodes per
axis, so the origin is a lattice point and the node set is symmetric under
v -> -v.  Every integral is a midpoint sum (node value times h^d), and grid
functions are treated as identically zero outside the lattice hull.

The module also hosts the discrete interpolation-inequality checkers built on
the weighted norms.  Each check returns an InequalityReport whose slack is
non-negative up to floating-point roundoff, because on the lattice every one
of these inequalities is an exact consequence of Holder's inequality for
finite sums (plus weighted AM-GM for the absorption split).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import convolve as _signal_convolve

from .exponents import (
    HydroBounds,
    KernelParams,
    derive_base,
    interp_general,
    interp_second,
    interp_weighted_q0,
)
from .reports import InequalityReport

# Relative slack below which a discrete inequality is declared violated.
SLACK_TOL = 1e-12

_BIN_MAGIC = b"VGRD0001"


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice on [-R, R]^d with N nodes per axis (N odd)."""

    d: int
    R: float
    N: int

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3, got %r" % (self.d,))
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.N < 3 or self.N % 2 == 0:
            raise ValueError("N must be odd and >= 3 so that 0 is a node")

    @property
    def h(self) -> float:
        return 2.0 * self.R / (self.N - 1)

    @property
    def cell(self) -> float:
        """Volume h^d of one cell."""
        return self.h ** self.d

    def shape(self) -> tuple:
        return (self.N,) * self.d

    def axis(self) -> np.ndarray:
        return _axis(self)

    def mesh(self) -> tuple:
        """Coordinate arrays (one per component), each of shape (N,)*d."""
        return _mesh(self)

    def bracket(self) -> np.ndarray:
        """The weight <v> = sqrt(1 + |v|^2) at every node."""
        return _bracket(self)

    def points(self) -> np.ndarray:
        """All nodes as an (N^d, d) array, row-major."""
        return _points(self)


@lru_cache(maxsize=None)
def _axis(grid: GridSpec) -> np.ndarray:
    ax = np.linspace(-grid.R, grid.R, grid.N)
    ax.setflags(write=False)
    return ax


@lru_cache(maxsize=None)
def _mesh(grid: GridSpec) -> tuple:
    arrs = np.meshgrid(*([_axis(grid)] * grid.d), indexing="ij")
    for a in arrs:
        a.setflags(write=False)
    return tuple(arrs)


@lru_cache(maxsize=None)
def _bracket(grid: GridSpec) -> np.ndarray:
    sq = np.zeros(grid.shape())
    for comp in _mesh(grid):
        sq = sq + comp ** 2
    br = np.sqrt(1.0 + sq)
    br.setflags(write=False)
    return br


@lru_cache(maxsize=None)
def _points(grid: GridSpec) -> np.ndarray:
    pts = np.stack([c.ravel() for c in _mesh(grid)], axis=-1)
    pts.setflags(write=False)
    return pts


@dataclass
class Density:
    """Non-negative grid function (number density per unit velocity volume)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape():
            raise ValueError(
                "values shape %r does not match grid shape %r"
                % (vals.shape, self.grid.shape())
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("density values must be finite")
        if np.any(vals < 0):
            raise ValueError("density values must be non-negative")
        self.values = vals


def sample(f: Density, pts) -> np.ndarray:
    """Multilinear interpolation of f at off-grid points, zero outside the hull.

    pts has shape (..., d).  Non-negativity of f is preserved because the
    interpolation weights are convex.
    """
    interp = RegularGridInterpolator(
        (f.grid.axis(),) * f.grid.d,
        f.values,
        method="linear",
        bounds_error=False,
        fill_value=0.0,
    )
    return interp(np.asarray(pts, dtype=float))


def weighted_lp_norm(f: Density, p: float, k: float) -> float:
    """(sum f^p <v>^{kp} h^d)^{1/p}; p = inf gives max f <v>^k."""
    if not p >= 1:
        raise ValueError("p must be >= 1, got %r" % (p,))
    weighted = f.values * f.grid.bracket() ** k
    if math.isinf(p):
        return float(np.max(weighted))
    return float((np.sum(weighted ** p) * f.grid.cell) ** (1.0 / p))


def bracket_moment(f: Density, k: float) -> float:
    """The k-th bracket moment sum f <v>^k h^d.

    Extreme weights may overflow to inf; the inequality checkers account for
    that explicitly, so the overflow is deliberate rather than an error.
    """
    with np.errstate(over="ignore"):
        return float(np.sum(f.values * f.grid.bracket() ** k) * f.grid.cell)


def moments(f: Density):
    """Midpoint-rule (mass, momentum vector, kinetic energy)."""
    cell = f.grid.cell
    mass = float(np.sum(f.values) * cell)
    mom = np.array([np.sum(f.values * c) * cell for c in f.grid.mesh()])
    sq = np.zeros(f.grid.shape())
    for c in f.grid.mesh():
        sq = sq + c ** 2
    energy = float(np.sum(f.values * sq) * cell)
    return mass, mom, energy


def entropy(f: Density) -> float:
    """sum f ln f h^d with the convention 0 ln 0 = 0."""
    vals = f.values
    out = np.zeros_like(vals)
    pos = vals > 0
    out[pos] = vals[pos] * np.log(vals[pos])
    return float(np.sum(out) * f.grid.cell)


def hydro_check(f: Density, bounds: HydroBounds) -> bool:
    """True iff mass lies in [m0, M0], energy <= E0 and entropy <= H0."""
    mass, _, energy = moments(f)
    if not (float(bounds.m0) <= mass <= float(bounds.M0)):
        return False
    if energy > float(bounds.E0):
        return False
    return entropy(f) <= float(bounds.H0)


def self_cell_integral(gamma: float, h: float, d: int) -> float:
    """Exact integral of |w|^gamma over the disk/ball of the same area/volume
    as one grid cell.  Used for the singular self-cell of convolve_gamma."""
    if d == 2:
        r_eq = h / math.sqrt(math.pi)
        return 2.0 * math.pi * r_eq ** (gamma + 2.0) / (gamma + 2.0)
    r_eq = h * (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0)
    return 4.0 * math.pi * r_eq ** (gamma + 3.0) / (gamma + 3.0)


def convolve_gamma(f: Density, gamma: float) -> Density:
    """g(v) = sum_{w != v} f(w) |v-w|^gamma h^d + f(v) S_cell(gamma, h).

    The self-cell uses the exact radial integral over the equal-area disk
    (equal-volume ball in d=3), which keeps the quadrature second-order
    despite the integrable singularity at w = v.
    """
    grid = f.grid
    if not (-grid.d < gamma <= 1):
        raise ValueError("gamma must lie in (-d, 1], got %r" % (gamma,))
    off = grid.h * np.arange(-(grid.N - 1), grid.N, dtype=float)
    mesh = np.meshgrid(*([off] * grid.d), indexing="ij")
    rsq = np.zeros(mesh[0].shape)
    for c in mesh:
        rsq = rsq + c ** 2
    center = (grid.N - 1,) * grid.d
    rsq[center] = 1.0  # placeholder, overwritten below
    kern = rsq ** (gamma / 2.0)
    kern[center] = self_cell_integral(gamma, grid.h, grid.d) / grid.cell
    # The kernel array is the larger operand; scipy requires it first in
    # 'valid' mode, and convolution commutes.
    out = _signal_convolve(kern, f.values, mode="valid", method="direct")
    return Density(grid, out * grid.cell)


# ---------------------------------------------------------------------------
# serialization


def save_csv(f: Density, path) -> None:
    """Header line d,R,N then row-major values, one last-axis row per line.

    Floats are written with repr so the round trip is bit-stable.
    """
    n = f.grid.N
    with open(path, "w", newline="\n") as fh:
        fh.write("%d,%s,%d\n" % (f.grid.d, repr(float(f.grid.R)), n))
        for row in f.values.reshape(-1, n):
            fh.write(",".join(repr(float(x)) for x in row))
            fh.write("\n")


def load_csv(path) -> Density:
    with open(path, "r") as fh:
        head = fh.readline().strip().split(",")
        d, R, n = int(head[0]), float(head[1]), int(head[2])
        rows = [np.array([float(tok) for tok in line.strip().split(",")])
                for line in fh if line.strip()]
    grid = GridSpec(d, R, n)
    vals = np.vstack(rows).reshape(grid.shape())
    return Density(grid, vals)


def save_binary(f: Density, path) -> None:
    """Magic, little-endian (d, R, N), then raw float64 values row-major."""
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<qdq", f.grid.d, float(f.grid.R), f.grid.N))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_binary(path) -> Density:
    with open(path, "rb") as fh:
        magic = fh.read(len(_BIN_MAGIC))
        if magic != _BIN_MAGIC:
            raise ValueError("not a density file: bad magic %r" % (magic,))
        d, R, n = struct.unpack("<qdq", fh.read(24))
        raw = fh.read()
    grid = GridSpec(int(d), float(R), int(n))
    vals = np.frombuffer(raw, dtype="<f8").reshape(grid.shape())
    return Density(grid, vals)


# ---------------------------------------------------------------------------
# discrete interpolation inequalities
#
# Every checker below evaluates both sides with independent code paths and
# reports slack = rhs - lhs, relative to the larger side.  On the lattice the
# inequalities are exact consequences of Holder for finite sums, so failures
# beyond roundoff indicate a genuine exponent bug.


def _slack_report(name, lhs, rhs, probe, notes=None) -> InequalityReport:
    # An overflowed right-hand side keeps the inequality true (all factors are
    # non-negative, so rounding can only have inflated it); an overflowed
    # left-hand side is an honest failure.
    if math.isinf(rhs) and not math.isinf(lhs):
        rel = math.inf
    elif math.isinf(lhs) or math.isnan(lhs) or math.isnan(rhs):
        rel = -math.inf
    else:
        scale = max(abs(lhs), abs(rhs), 1e-300)
        rel = (rhs - lhs) / scale
    all_notes = {"slack": rhs - lhs, "relative_slack": rel}
    if notes:
        all_notes.update(notes)
    verdict = "pass" if rel >= -SLACK_TOL else "fail"
    return InequalityReport(
        name=name,
        lhs=lhs,
        rhs=rhs,
        empirical_constant=None,
        verdict=verdict,
        probe=probe,
        notes=all_notes,
    )


def holder_weight_check(f: Density, p: float, q: float, alpha: float,
                        k_p: float, k_q: float, probe: str = "") -> InequalityReport:
    """Weighted-norm interpolation between L^p_{k_p} and L^q_{k_q}.

    The intermediate exponent is 1/r = alpha/p + (1-alpha)/q and the weight
    is k_r = alpha k_p + (1-alpha) k_q.
    """
    if not (p >= 1 and q >= 1 and 0 <= alpha <= 1):
        raise ValueError("need p, q >= 1 and alpha in [0, 1]")
    r = 1.0 / (alpha / p + (1.0 - alpha) / q)
    k_r = alpha * k_p + (1.0 - alpha) * k_q
    lhs = weighted_lp_norm(f, r, k_r)
    rhs = weighted_lp_norm(f, p, k_p) ** alpha * weighted_lp_norm(f, q, k_q) ** (1.0 - alpha)
    return _slack_report("holder-weight", lhs, rhs, probe,
                         {"r": r, "k_r": k_r})


def interp_zero_check(f: Density, k: float, alpha0: float,
                      probe: str = "") -> InequalityReport:
    """Moment interpolation against the second bracket moment.

    The 2-moment here carries the full weight <v>^2 = 1 + |v|^2, so it is the
    mass plus the kinetic energy of f.
    """
    if not 0 < alpha0 < 1:
        raise ValueError("alpha0 must lie in (0, 1)")
    e2 = bracket_moment(f, 2.0)
    reduced = (k - 2.0 * alpha0) / (1.0 - alpha0)
    lhs = bracket_moment(f, k)
    rhs = e2 ** alpha0 * bracket_moment(f, reduced) ** (1.0 - alpha0)
    return _slack_report("moment-interp-zero", lhs, rhs, probe,
                         {"reduced_weight": reduced})


def _base_norm(f: Density, params: KernelParams):
    """The norm ||f^{q0}||_{L^{p0}_{k0}} from the derived exponents."""
    base = derive_base(params)
    q0, p0, k0 = float(base.q0), float(base.p0), float(base.k0)
    br = f.grid.bracket()
    val = (np.sum((f.values ** q0 * br ** k0) ** p0) * f.grid.cell) ** (1.0 / p0)
    return float(val), q0, p0, k0


def interp_general_check(f: Density, params: KernelParams, p1: float,
                         k1: float, probe: str = "") -> InequalityReport:
    """Interpolation of ||f||_{L^{p1}_{k1/p1}} between the base norm and a
    single moment with the derived weight m1."""
    a1, a2, m1 = interp_general(params, p1, k1)
    a1, a2, m1 = float(a1), float(a2), float(m1)
    x, q0, p0, k0 = _base_norm(f, params)
    y = bracket_moment(f, m1)
    lhs = weighted_lp_norm(f, p1, k1 / p1)
    rhs = x ** (a1 / p1) * y ** (a2 / p1)
    return _slack_report("moment-interp-general", lhs, rhs, probe,
                         {"alpha1": a1, "alpha2": a2, "m1": m1})


def interp_second_check(f: Density, params: KernelParams, k2: float,
                        probe: str = "") -> InequalityReport:
    """Interpolation of the k2 moment between the base norm and a moment of
    f^{q0-1} with the derived weight m2."""
    m2 = float(interp_second(params, k2))
    x, q0, p0, k0 = _base_norm(f, params)
    d = float(params.d)
    s = float(params.s)
    denom = d * d + 4.0 * s * s
    a3 = d * (d - 2.0 * s) / denom
    a4 = 4.0 * s * d / denom
    br = f.grid.bracket()
    w = float(np.sum(f.values ** (q0 - 1.0) * br ** m2) * f.grid.cell)
    lhs = bracket_moment(f, k2)
    rhs = x ** a3 * w ** a4
    return _slack_report("moment-interp-second", lhs, rhs, probe,
                         {"alpha3": a3, "alpha4": a4, "m2": m2})


def absorption_split_check(f: Density, params: KernelParams, k3: float,
                           eps: float, probe: str = "") -> InequalityReport:
    """Weighted q0-moment split into eps times the base norm plus an
    absorption term with constant E2 * eps^{-d/(2s)}.

    E2 is the function's own second bracket moment; the split follows from
    chaining the three interpolation steps and weighted AM-GM, so it holds
    with non-negative slack on the lattice for every eps > 0.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    m3 = float(interp_weighted_q0(params, k3))
    x, q0, p0, k0 = _base_norm(f, params)
    d = float(params.d)
    s = float(params.s)
    e2 = bracket_moment(f, 2.0)
    c_eps = e2 * eps ** (-d / (2.0 * s))
    br = f.grid.bracket()
    lhs = float(np.sum(f.values ** q0 * br ** k3) * f.grid.cell)
    w3 = float(np.sum(f.values ** (q0 - 1.0) * br ** m3) * f.grid.cell)
    rhs = eps * x + c_eps * w3
    return _slack_report("absorption-split", lhs, rhs, probe,
                         {"m3": m3, "absorption_constant": c_eps})
