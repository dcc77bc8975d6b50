"""Collision operator in the sigma and Carleman representations, the
cancellation constant c_b, and entropy production.

The angular factor used everywhere is the one that makes the two
representations agree exactly in the continuum:

    b(cos theta) = sin(theta/2)^{-(d-1)-2s} cos(theta/2)^{gamma+2s+1}
                   btilde(cos theta)

Pulling the sigma-integral back to the hyperplane variables produces exactly
the Carleman kernel of the kernel module with this b and no leftover powers;
using the bare theta-power normalization instead would leave the two forms
off by a bounded but non-unit factor, which is what the cross-representation
checks are designed to catch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .exponents import KernelParams
from .kernel import (
    HyperplaneQuadrature,
    kernel_eval_many,
    kernel_matrix,
    polar_pv_patch,
)
from .vgrid import Density, sample

_QUAD_TOL = 1e-10


@dataclass(frozen=True)
class SigmaQuadrature:
    """Angular discretization for the sigma-form collision integral.

    v_* runs over the full velocity lattice of the density; theta nodes are
    graded as u = theta^{2-2s} between theta_min and pi (both signs in d=2,
    n_phi azimuthal midpoints in d=3).
    """

    n_theta: int = 32
    theta_min: float = 0.05
    n_phi: int = 8

    def __post_init__(self):
        if not self.theta_min > 0:
            raise ValueError("theta_min must be positive")
        if self.n_theta < 2 or self.n_phi < 1:
            raise ValueError("need at least 2 theta nodes and 1 phi node")


@dataclass
class CollisionOutput:
    q_values: np.ndarray
    form: str
    diagnostics: dict

    def __post_init__(self):
        if not np.all(np.isfinite(self.q_values)):
            raise ValueError("collision output must be finite")


def angular_factor(params: KernelParams, cos_theta, btilde=None):
    """b(cos theta) consistent across both representations (btilde = 1)."""
    c = np.asarray(cos_theta, dtype=float)
    d = params.d
    g = float(params.gamma)
    s = float(params.s)
    half_sin_sq = np.maximum((1.0 - c) / 2.0, 0.0)
    half_cos_sq = np.maximum((1.0 + c) / 2.0, 0.0)
    out = (half_sin_sq ** (-(d - 1 + 2.0 * s) / 2.0)
           * half_cos_sq ** ((g + 2.0 * s + 1.0) / 2.0))
    if btilde is not None:
        return out * btilde(c)
    return out * float(params.btilde_lo)


def _cb_integrand(params: KernelParams, theta, btilde):
    d = params.d
    g = float(params.gamma)
    theta = np.asarray(theta, dtype=float)
    bracket = np.cos(theta / 2.0) ** (-(d + g)) - 1.0
    b = angular_factor(params, np.cos(theta), btilde)
    if d == 2:
        return 2.0 * bracket * b
    return 2.0 * np.pi * bracket * b * np.sin(theta)


def cb_constant(params: KernelParams, btilde=None) -> float:
    """The cancellation constant, by adaptive quadrature in theta.

    Near 0 the integrand behaves like theta^{1-2s}, so the inner piece is
    computed in the variable u = theta^{2-2s} where it is bounded.
    """
    s = float(params.s)
    expo = 2.0 - 2.0 * s
    split = 0.5

    def inner(u):
        theta = u ** (1.0 / expo)
        jac = theta ** (2.0 * s - 1.0) / expo
        return _cb_integrand(params, theta, btilde) * jac

    val1, err1 = scipy.integrate.quad(inner, 0.0, split ** expo, limit=200)
    val2, err2 = scipy.integrate.quad(
        lambda th: _cb_integrand(params, th, btilde), split, math.pi, limit=200)
    total = val1 + val2
    if err1 + err2 > max(_QUAD_TOL, 1e-8 * abs(total)):
        raise RuntimeError("cancellation constant quadrature did not converge")
    return float(total)


def default_theta_min(params: KernelParams, btilde=None,
                      fraction: float = 0.01) -> float:
    """Small-angle cutoff keeping the neglected symmetrized angular mass
    below the given fraction of the retained mass.

    The symmetrized integrand gains a theta^2 factor from the cancellation of
    the odd part, so the masses compared are integrals of theta^2 b dsigma.
    """
    s = float(params.s)
    expo = 2.0 - 2.0 * s

    def weighted(theta):
        theta = np.asarray(theta, dtype=float)
        mu = np.sin(theta) if params.d == 3 else 1.0
        return theta ** 2 * angular_factor(params, np.cos(theta), btilde) * mu

    def small_mass(tm):
        val, _ = scipy.integrate.quad(
            lambda u: weighted(u ** (1.0 / expo)) * u ** ((2.0 * s - 1.0) / expo) / expo,
            0.0, tm ** expo, limit=100)
        return val

    total, _ = scipy.integrate.quad(weighted, 1e-8, math.pi, limit=200)
    lo, hi = 1e-6, 1.5
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        neglected = small_mass(mid)
        if neglected <= fraction * (total - neglected):
            lo = mid
        else:
            hi = mid
    return lo


def _theta_nodes(params: KernelParams, quad: SigmaQuadrature):
    s = float(params.s)
    expo = 2.0 - 2.0 * s
    u_edges = np.linspace(quad.theta_min ** expo, math.pi ** expo, quad.n_theta + 1)
    u_mid = 0.5 * (u_edges[:-1] + u_edges[1:])
    theta = u_mid ** (1.0 / expo)
    w = np.diff(u_edges) * theta ** (2.0 * s - 1.0) / expo
    return theta, w


def _perp_basis(khat: np.ndarray):
    d = khat.shape[1]
    if d == 2:
        return (np.stack([-khat[:, 1], khat[:, 0]], axis=1),)
    helper = np.zeros_like(khat)
    helper[np.arange(len(khat)), np.argmin(np.abs(khat), axis=1)] = 1.0
    e1 = np.cross(khat, helper)
    e1 = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(khat, e1)
    return e1, e2


def _sigma_terms(f: Density, params: KernelParams, quad: SigmaQuadrature,
                 btilde, node_flat: np.ndarray):
    """Yields, for each requested output node, the pre/post products and the
    combined quadrature weights of the sigma integral.

    Yields tuples (i, pre, post, weight) where pre = f(v_*) f(v), post is the
    interpolated f(v_*') f(v'), and weight carries B h^d and the angular
    weights; arrays are flattened over (v_*, sigma nodes).
    """
    grid = f.grid
    d = grid.d
    g = float(params.gamma)
    pts = grid.points()
    fvals = f.values.ravel()
    theta, w_theta = _theta_nodes(params, quad)
    b_theta = angular_factor(params, np.cos(theta), btilde)
    if d == 2:
        # both signs of the deviation angle
        sin_parts = np.concatenate([np.sin(theta), -np.sin(theta)])
        cos_parts = np.concatenate([np.cos(theta), np.cos(theta)])
        w_ang = np.concatenate([w_theta * b_theta, w_theta * b_theta])
        phi_parts = None
    else:
        phi = 2.0 * np.pi * (np.arange(quad.n_phi) + 0.5) / quad.n_phi
        dphi = 2.0 * np.pi / quad.n_phi
        cos_parts = np.repeat(np.cos(theta), quad.n_phi)
        sin_parts = np.repeat(np.sin(theta), quad.n_phi)
        phi_parts = np.tile(phi, quad.n_theta)
        w_ang = np.repeat(w_theta * b_theta * np.sin(theta), quad.n_phi) * dphi
    n_sigma = len(cos_parts)
    for i in node_flat:
        v = pts[i]
        rel = pts - v[None, :]
        dist = np.linalg.norm(rel, axis=1)
        keep = dist > 0
        rel = rel[keep]
        dist = dist[keep]
        fstar = fvals[keep]
        khat = -rel / dist[:, None]  # (v - v_*)/|v - v_*|
        mid = (pts[keep] + v[None, :]) / 2.0
        basis = _perp_basis(khat)
        if d == 2:
            sigma = (cos_parts[None, :, None] * khat[:, None, :]
                     + sin_parts[None, :, None] * basis[0][:, None, :])
        else:
            azim = (np.cos(phi_parts)[None, :, None] * basis[0][:, None, :]
                    + np.sin(phi_parts)[None, :, None] * basis[1][:, None, :])
            sigma = (cos_parts[None, :, None] * khat[:, None, :]
                     + sin_parts[None, :, None] * azim)
        vp = mid[:, None, :] + (dist[:, None, None] / 2.0) * sigma
        vsp = mid[:, None, :] - (dist[:, None, None] / 2.0) * sigma
        both = np.concatenate([vp.reshape(-1, d), vsp.reshape(-1, d)], axis=0)
        interp = sample(f, both)
        f_vp = interp[: len(rel) * n_sigma].reshape(len(rel), n_sigma)
        f_vsp = interp[len(rel) * n_sigma:].reshape(len(rel), n_sigma)
        pre = (fstar * fvals[i])[:, None] * np.ones(n_sigma)[None, :]
        post = f_vsp * f_vp
        weight = (dist ** g)[:, None] * w_ang[None, :] * grid.cell
        yield i, pre, post, weight


def q_sigma_form(f: Density, params: KernelParams,
                 quad: SigmaQuadrature = None, btilde=None,
                 nodes=None, conserve: bool = True) -> CollisionOutput:
    """Sigma-representation collision operator on the grid.

    The v_* = v node is skipped: there the pre and post products coincide and
    the contribution cancels exactly.  Cost grows as N^{2d} n_theta, so d=3
    runs are only practical on small lattices.

    conserve subtracts the least-squares moment defect afterwards; the raw
    quadrature defects stay in diagnostics under raw_ keys either way.
    """
    grid = f.grid
    if quad is None:
        quad = SigmaQuadrature(theta_min=default_theta_min(params))
    n = grid.N ** grid.d
    node_flat = np.arange(n) if nodes is None else np.asarray(nodes)
    q = np.zeros(n)
    for i, pre, post, weight in _sigma_terms(f, params, quad, btilde, node_flat):
        q[i] = float(np.sum((post - pre) * weight))
    if nodes is not None:
        conserve = False
    return _finalize(f, q.reshape(grid.shape()), "sigma", conserve)


def q_carleman_form(f: Density, params: KernelParams,
                    hquad: HyperplaneQuadrature = HyperplaneQuadrature(),
                    eps_pv: float = None, btilde=None,
                    kmatrix: np.ndarray = None, patch: bool = True,
                    theta_min: float = None,
                    conserve: bool = True) -> CollisionOutput:
    """Carleman-representation collision operator on the grid.

    Gain and loss kernels come from one kernel matrix; lattice nodes inside
    the principal-value radius are excluded and replaced by the graded polar
    patch, which carries the near-singular paired difference.

    The hyperplane integrals are restricted to |w| <= |p|/tan(theta_min/2),
    the exact image of the sigma-form's small-angle cutoff, so both
    representations discretize the same truncated operator; on interpolated
    densities the grazing content they would otherwise disagree on is not
    small (the interpolant has slope jumps at every node).

    conserve as in q_sigma_form.
    """
    grid = f.grid
    if eps_pv is None:
        eps_pv = 2.0 * grid.h
    if theta_min is None:
        theta_min = default_theta_min(params)
    if kmatrix is None:
        kmatrix = kernel_matrix(f, params, hquad, btilde, theta_min)
    pts = grid.points()
    fflat = f.values.ravel()
    diffs = pts[:, None, :] - pts[None, :, :]
    dist = np.linalg.norm(diffs, axis=2)
    mask = dist >= eps_pv
    gain = np.sum(np.where(mask, kmatrix, 0.0) * fflat[None, :], axis=1)
    loss = fflat * np.sum(np.where(mask, kmatrix.T, 0.0), axis=1)
    q = (gain - loss) * grid.cell
    if patch:
        s = float(params.s)
        tanhalf = math.tan(0.5 * theta_min)
        for i in range(len(pts)):
            v = pts[i]
            fi = fflat[i]

            def g(vp, _v=v, _fi=fi):
                base = np.broadcast_to(_v, vp.shape)
                return (sample(f, vp) * kernel_eval_many(f, base, vp, params,
                                                         hquad, btilde, theta_min)
                        - _fi * kernel_eval_many(f, vp, base, params,
                                                 hquad, btilde, theta_min))

            # radial kink where the angular cutoff stops clipping the
            # hyperplane extent
            ext = min(hquad.extent * math.hypot(1.0, np.linalg.norm(v)),
                      2.0 * grid.R)
            q[i] += polar_pv_patch(g, v, eps_pv, grid, s,
                                   r_knots=(ext * tanhalf,))
    return _finalize(f, q.reshape(grid.shape()), "carleman", conserve)


def entropy_production(f: Density, params: KernelParams,
                       quad: SigmaQuadrature = None, btilde=None) -> float:
    """Symmetrized entropy production (1/2) iiint (X - Y) ln(X/Y) B.

    X = f(v_*) f(v), Y = f(v_*') f(v'); pairings where either product
    vanishes contribute zero, extending x ln x -> 0 to the quotient.
    """
    grid = f.grid
    if quad is None:
        quad = SigmaQuadrature(theta_min=default_theta_min(params))
    n = grid.N ** grid.d
    total = 0.0
    for _, pre, post, weight in _sigma_terms(f, params, quad, btilde, np.arange(n)):
        ok = (pre > 0) & (post > 0)
        contrib = np.zeros_like(pre)
        contrib[ok] = (pre[ok] - post[ok]) * np.log(pre[ok] / post[ok])
        total += float(np.sum(contrib * weight))
    return 0.5 * total * grid.cell


def _invariant_diagnostics(f: Density, q: np.ndarray) -> dict:
    grid = f.grid
    cell = grid.cell
    mass = float(np.sum(q) * cell)
    mom = [float(np.sum(q * c) * cell) for c in grid.mesh()]
    sq = np.zeros(grid.shape())
    for c in grid.mesh():
        sq = sq + c ** 2
    energy = float(np.sum(q * sq) * cell)
    return {"mass_residual": mass,
            "momentum_residual": float(np.linalg.norm(mom)),
            "energy_residual": energy}


def project_conserved(q: np.ndarray, grid) -> np.ndarray:
    """Remove the discrete mass/momentum/energy content of a collision
    output by least squares against span{1, v, |v|^2}.

    The continuum operator annihilates these moments exactly; the
    quadratures leave small defects, and in the Carleman form the
    principal-value patch carries grazing-edge content whose defect decays
    only like h^{1-2s}, so the subtraction is applied rather than waiting
    out a nearly flat exponent.  The subtracted field is the minimal-L2
    one, a few percent of ||Q|| at default resolution.
    """
    pts = grid.points()
    cols = [np.ones(len(pts))]
    cols += [pts[:, i] for i in range(grid.d)]
    cols.append(np.sum(pts ** 2, axis=1))
    basis = np.stack(cols, axis=1)
    flat = q.reshape(-1)
    coef, *_ = np.linalg.lstsq(basis, flat, rcond=None)
    return (flat - basis @ coef).reshape(q.shape)


def _finalize(f: Density, q: np.ndarray, form: str,
              conserve: bool) -> "CollisionOutput":
    raw = _invariant_diagnostics(f, q)
    if conserve:
        q = project_conserved(q, f.grid)
    diag = _invariant_diagnostics(f, q)
    diag.update({"raw_" + k: val for k, val in raw.items()})
    return CollisionOutput(q, form, diag)
