"""Truncated convex machinery: Kruzhkov semi-entropies, the truncated power
phi_{0,kappa}, its conjugate, Bregman divergences, and the monotone
functional m_kappa.

All evaluators accept scalars or numpy arrays of matching shape.  The
truncation exponent q0 is always the one derived from (d, s); callers pass it
explicitly so the functions stay free of grid state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exponents import derive_base
from .vgrid import Density


@dataclass(frozen=True)
class TruncationLevel:
    kappa: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


@dataclass
class ConvexEval:
    """phi, phi_dot and the conjugate Phi at one argument (or array)."""

    phi: object
    phi_dot: object
    Phi: object


def phi_a(a, r):
    """Kruzhkov semi-entropy (r - a)_+."""
    if not np.all(np.asarray(a) > 0):
        raise ValueError("a must be positive")
    return np.maximum(np.asarray(r, dtype=float) - a, 0.0)


def dphi_a(a, r, s):
    """Divergence of the semi-entropy: (s-a)_+ for r <= a, (a-s)_+ for r > a.

    At r = a exactly the r <= a branch applies.
    """
    if not np.all(np.asarray(a) > 0):
        raise ValueError("a must be positive")
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    below = np.maximum(s - a, 0.0)
    above = np.maximum(a - s, 0.0)
    return np.where(r <= a, below, above)


def Phi_a(a, r):
    """Conjugate of the semi-entropy: a on {r > a}, zero elsewhere."""
    if not np.all(np.asarray(a) > 0):
        raise ValueError("a must be positive")
    r = np.asarray(r, dtype=float)
    return np.where(r > a, float(a) * np.ones_like(r), 0.0)


def _clip_pow(kappa, q0, r):
    return np.minimum(np.maximum(np.asarray(r, dtype=float), 0.0), kappa)


def phi0k(kappa: float, q0: float, r) -> ConvexEval:
    """Truncated q0-power, its derivative, and the conjugate.

    phi(r) = (r_+ ^ kappa)^{q0} + q0 kappa^{q0-1} (r - kappa)_+ continues the
    pure power linearly above the truncation level, so phi is C^1 at kappa.
    """
    if not np.all(np.asarray(kappa) > 0):
        raise ValueError("kappa must be positive")
    r = np.asarray(r, dtype=float)
    clipped = _clip_pow(kappa, q0, r)
    phi = clipped ** q0 + q0 * kappa ** (q0 - 1.0) * np.maximum(r - kappa, 0.0)
    phi_dot = q0 * clipped ** (q0 - 1.0)
    Phi = (q0 - 1.0) * clipped ** q0
    if r.ndim == 0:
        return ConvexEval(float(phi), float(phi_dot), float(Phi))
    return ConvexEval(phi, phi_dot, Phi)


def bregman_d(kappa: float, q0: float, r, s):
    """Bregman divergence phi(s) - phi(r) - phi_dot(r)(s - r) of phi0k."""
    at_r = phi0k(kappa, q0, r)
    at_s = phi0k(kappa, q0, s)
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    out = at_s.phi - at_r.phi - at_r.phi_dot * (s - r)
    if out.ndim == 0:
        return float(out)
    return out


def bregman_special_constant(q0: float) -> float:
    """c_{q0} = 2^{-q0} - 1 + q0/2, the Bregman gap at s = (r ^ kappa)/2."""
    return 2.0 ** (-q0) - 1.0 + q0 / 2.0


def integral_representation_check(phi, ddphi, r: float, n_nodes: int = 10001,
                                  dphi_zero: float = 0.0) -> float:
    """Residual of phi(r) against phi(0) + phi'(0) r + int phidd(a)(r-a)_+ da.

    phi and ddphi are callables accepting arrays; the (r-a)_+ factor kills the
    integrand beyond a = r, so the trapezoid runs over [0, r] only.
    """
    if r == 0:
        return abs(float(phi(0.0)))
    a = np.linspace(0.0, r, n_nodes)
    integrand = ddphi(a) * (r - a)
    rhs = float(phi(0.0)) + dphi_zero * r + float(np.trapezoid(integrand, a))
    return abs(float(phi(r)) - rhs)


def m_kappa(f, barrier, t: float, kappa: float, params) -> float:
    """Grid quadrature of phi_{0,kappa}(f - A(t)) over velocity (and space).

    f is a homogeneous Density (space measure 1) or a kinetic state carrying
    values of shape (n_x,) + velocity shape, a grid attribute, and the cell
    length x_cell.  The barrier supplies profile(t, grid), the array of
    A(t, v) over the velocity lattice.
    """
    q0 = float(derive_base(params).q0)
    if isinstance(f, Density):
        values = f.values[None]
        grid = f.grid
        x_weight = 1.0
    else:
        grid = f.grid
        values = f.values.reshape((-1,) + grid.shape())
        x_weight = float(f.x_cell)
    prof = np.asarray(barrier.profile(t, grid))
    diff = values - prof[None]
    phi = phi0k(kappa, q0, diff).phi
    return float(np.sum(phi) * x_weight * grid.cell)
