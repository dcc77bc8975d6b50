"""Empirical verification of the coercivity, extra-term, and error-term
inequalities driving the decay bootstrap.

Every check computes its two sides on independent code paths: the left side
is always a lattice quadrature against the cached kernel matrix or the
gamma-convolution, the right side is assembled from norms and bracket
moments.  Constants that the analysis leaves implicit are outputs here
(measured ratios), never inputs.  The kernel matrix is built once per probe
and read by every check that needs it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .collision import cb_constant, default_theta_min
from .convexity import phi0k
from .exponents import (HydroBounds, KernelParams, absorption_constant,
                        derive_base, moment_exponent_lq)
from .kernel import (EmpiricalConstants, HyperplaneQuadrature,
                     _canonical_normals, cone_estimate, kernel_matrix,
                     upper_bound_profile)
from .reports import InequalityReport
from .vgrid import (Density, bracket_moment, convolve_gamma, hydro_check,
                    moments, weighted_lp_norm)

__all__ = [
    "coercivity_first",
    "second_coercivity",
    "good_extra_term",
    "very_good_extra_term",
    "error_velocity_term",
    "error_velocity_large_q",
    "hard_error_terms",
    "soft_error_split",
    "soft_error_large_q",
    "measure_constants",
    "estimate_suite",
]


# ---------------------------------------------------------------------------
# shared plumbing


def _resolve_theta(params: KernelParams, theta_min):
    return default_theta_min(params) if theta_min is None else theta_min


def _resolve_kmatrix(f: Density, params: KernelParams, quad, btilde,
                     theta_min, kmatrix):
    if kmatrix is not None:
        return kmatrix
    if quad is None:
        quad = HyperplaneQuadrature()
    return kernel_matrix(f, params, quad, btilde,
                         _resolve_theta(params, theta_min))


def _bregman_lhs(gflat: np.ndarray, kappa: float, q0: float,
                 K: np.ndarray, cell: float) -> float:
    """sum_{i,j} d_{phi0k}(g_i, g_j) K[i,j] h^{2d}, chunked over rows."""
    ev = phi0k(kappa, q0, gflat)
    total = 0.0
    step = 512
    for i in range(0, len(gflat), step):
        sl = slice(i, i + step)
        D = (ev.phi[None, :] - ev.phi[sl][:, None]
             - ev.phi_dot[sl][:, None] * (gflat[None, :] - gflat[sl][:, None]))
        total += float(np.sum(D * K[sl]))
    return total * cell * cell


def _excess(fvals: np.ndarray, A: np.ndarray, kappa: float) -> np.ndarray:
    """The truncated excess W = ((f - A)_+ ^ kappa)."""
    return np.minimum(np.maximum(fvals - A, 0.0), kappa)


def _capital_phi(fvals, A, kappa, q0):
    """Phi(f) = (q0-1) W^{q0} + q0 A W^{q0-1}, the conjugate-weighted excess."""
    W = _excess(fvals, A, kappa)
    return (q0 - 1.0) * W ** q0 + q0 * A * W ** (q0 - 1.0)


def _moment(grid, weights: np.ndarray, k: float) -> float:
    return bracket_moment(Density(grid, weights), k)


def _omega(d: int, codim: int) -> float:
    """Surface measure of the unit sphere in dimension d - codim."""
    n = d - codim
    if n <= 0:
        return 2.0
    if n == 1:
        return 2.0 * math.pi
    return 4.0 * math.pi


# ---------------------------------------------------------------------------
# coercivity


def coercivity_first(f: Density, g: Density, kappa: float,
                     params: KernelParams, hydro: HydroBounds, quad=None,
                     btilde=None, theta_min=None, kmatrix=None,
                     probe: str = "") -> InequalityReport:
    """Bregman-weighted kernel energy of g against the strong truncated norm.

    The measured constant is LHS / RHS.  A vanishing or negative right side
    makes the comparison inapplicable (the g = 0 case is trivially
    consistent); a failed hydrodynamic envelope on f voids the precondition.
    """
    name = "coercivity-first"
    base = derive_base(params)
    q0, p0, k0 = float(base.q0), float(base.p0), float(base.k0)
    if not hydro_check(f, hydro):
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "hydro envelope violated"})
    grid = g.grid
    clipped = np.minimum(g.values, kappa)
    strong = weighted_lp_norm(Density(grid, clipped ** q0), p0, k0)
    notes = {"kappa": kappa, "strong_norm": strong}
    rhs = strong
    if k0 < 0:
        corr = _moment(grid, clipped ** q0, float(params.gamma))
        rhs = strong - corr
        notes["soft_correction"] = corr
    if strong == 0.0:
        return InequalityReport(name, 0.0, 0.0, None, "inapplicable", probe,
                                dict(notes, reason="both sides vanish",
                                     trivial=True))
    if rhs <= 0.0:
        return InequalityReport(name, 0.0, rhs, None, "inapplicable", probe,
                                dict(notes, reason="non-positive right side"))
    K = _resolve_kmatrix(f, params, quad, btilde, theta_min, kmatrix)
    lhs = _bregman_lhs(g.values.ravel(), kappa, q0, K, grid.cell)
    verdict = "pass" if lhs > 0.0 else "fail"
    return InequalityReport(name, lhs, rhs, lhs / rhs, verdict, probe, notes)


def second_coercivity(f: Density, g: Density, kappa: float,
                      params: KernelParams, hydro: HydroBounds,
                      kappa0: float = 0.0, quad=None, btilde=None,
                      theta_min=None, kmatrix=None,
                      probe: str = "") -> InequalityReport:
    """Kernel energy against the truncation-level tail of g.

    Only the part of g above kappa feeds the right side, so g <= kappa makes
    the check inapplicable.  kappa0 is the configured floor below which the
    truncation level is considered too small to trust.
    """
    name = "coercivity-second"
    base = derive_base(params)
    q0 = float(base.q0)
    d = params.d
    s = float(params.s)
    if kappa < kappa0:
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "kappa below floor",
                                        "kappa0": kappa0})
    if not hydro_check(f, hydro):
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "hydro envelope violated"})
    grid = g.grid
    over = np.maximum(g.values - kappa, 0.0)
    if not np.any(over > 0):
        return InequalityReport(name, 0.0, 0.0, None, "inapplicable", probe,
                                {"reason": "g never exceeds kappa",
                                 "kappa": kappa})
    nweight = _moment(grid, np.minimum(g.values, kappa) ** (q0 - 1.0),
                      -(d - 1.0))
    tail = _moment(grid, over, float(params.gamma))
    rhs = kappa ** (2.0 * s / d * q0) * nweight ** (-2.0 * s / d) * tail
    K = _resolve_kmatrix(f, params, quad, btilde, theta_min, kmatrix)
    lhs = _bregman_lhs(g.values.ravel(), kappa, q0, K, grid.cell)
    verdict = "pass" if lhs > 0.0 else "fail"
    return InequalityReport(name, lhs, rhs, lhs / rhs, verdict, probe,
                            {"kappa": kappa, "tail_moment": tail,
                             "level_weight": nweight})


# ---------------------------------------------------------------------------
# extra terms


def _good_extra_sides(f: Density, A: np.ndarray, amp: float, q: float,
                      kappa: float, params: KernelParams, K: np.ndarray,
                      rhs_kind: str = "moment", bstar: float = None):
    """Both sides of the extra-term comparison for barrier values A.

    rhs_kind 'moment' uses amp^{1+2s/d} N_{l_q}(W^{q0-1}); 'decay' uses
    (amp^{1+2s}/bstar^{2s}) N_{gamma+2s-q}(W^{q0-1}).
    """
    grid = f.grid
    base = derive_base(params)
    q0 = float(base.q0)
    d = params.d
    s = float(params.s)
    dotvec = phi0k(kappa, q0, f.values - A).phi_dot.ravel()
    negvec = np.maximum(A - f.values, 0.0).ravel()
    lhs = float(dotvec @ K @ negvec) * grid.cell ** 2
    W = _excess(f.values, A, kappa)
    if rhs_kind == "moment":
        lq = float(moment_exponent_lq(params, q))
        rhs = amp ** (1.0 + 2.0 * s / d) * _moment(grid, W ** (q0 - 1.0), lq)
    else:
        k = float(params.gamma) + 2.0 * s - q
        rhs = (amp ** (1.0 + 2.0 * s) / bstar ** (2.0 * s)
               * _moment(grid, W ** (q0 - 1.0), k))
    return lhs, rhs


def good_extra_term(f: Density, barrier, t: float, kappa: float,
                    params: KernelParams, hydro: HydroBounds, c0: float,
                    quad=None, btilde=None, theta_min=None, kmatrix=None,
                    probe: str = "") -> InequalityReport:
    """Lower bound on the sign-definite barrier-crossing term.

    Applies for barrier exponents q <= d+1 once the amplitude clears
    a_get = 2^{d+1} (M0 + E0) / c0 with the measured cone constant c0.
    The measured constant is LHS / RHS.
    """
    name = "good-extra"
    d = params.d
    q = float(barrier.q)
    if q > d + 1:
        return InequalityReport(name, 0.0, 0.0, None, "inapplicable", probe,
                                {"reason": "decay exponent above d+1",
                                 "q": q})
    amp = barrier.amplitude(t)
    a_get = 2.0 ** (d + 1) * (float(hydro.M0) + float(hydro.E0)) / float(c0)
    if amp < a_get:
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "amplitude below a_get",
                                        "a_get": a_get, "amplitude": amp})
    A = barrier.profile(t, f.grid)
    K = _resolve_kmatrix(f, params, quad, btilde, theta_min, kmatrix)
    lhs, rhs = _good_extra_sides(f, A, amp, q, kappa, params, K)
    notes = {"a_get": a_get, "amplitude": amp, "kappa": kappa}
    if rhs == 0.0:
        verdict = "pass" if lhs == 0.0 else "fail"
        return InequalityReport(name, lhs, rhs, None, verdict, probe,
                                dict(notes, trivial=True,
                                     reason="f stays below the barrier"))
    verdict = "pass" if lhs > 0.0 else "fail"
    return InequalityReport(name, lhs, rhs, lhs / rhs, verdict, probe, notes)


def very_good_extra_term(f: Density, barrier, t: float, kappa: float,
                         qstar: float, bstar: float, params: KernelParams,
                         hydro: HydroBounds, quad=None, btilde=None,
                         theta_min=None, kmatrix=None,
                         probe: str = "") -> InequalityReport:
    """Barrier-crossing lower bound under a pointwise decay premise on f.

    Requires f <= bstar <v>^{-qstar} at every node and an amplitude at least
    2^{2+q-qstar} bstar.  The right side trades the generic moment for the
    decay-weighted one; the measured constant is LHS / RHS.
    """
    name = "very-good-extra"
    grid = f.grid
    q = float(barrier.q)
    envelope = float(bstar) * grid.bracket() ** (-float(qstar))
    bad = f.values > envelope * (1.0 + 1e-12)
    if np.any(bad):
        idx = np.unravel_index(int(np.argmax(f.values - envelope)),
                               grid.shape())
        node = [float(grid.axis()[i]) for i in idx]
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "decay premise violated",
                                        "violating_node": node})
    amp = barrier.amplitude(t)
    floor = 2.0 ** (2.0 + q - float(qstar)) * float(bstar)
    if amp < floor:
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "amplitude below the "
                                        "decay-premise floor",
                                        "floor": floor, "amplitude": amp})
    A = barrier.profile(t, grid)
    K = _resolve_kmatrix(f, params, quad, btilde, theta_min, kmatrix)
    lhs, rhs = _good_extra_sides(f, A, amp, q, kappa, params, K,
                                 rhs_kind="decay", bstar=float(bstar))
    notes = {"amplitude": amp, "floor": floor, "qstar": qstar,
             "bstar": bstar}
    if rhs == 0.0:
        verdict = "pass" if lhs == 0.0 else "fail"
        return InequalityReport(name, lhs, rhs, None, verdict, probe,
                                dict(notes, trivial=True,
                                     reason="f stays below the barrier"))
    verdict = "pass" if lhs > 0.0 else "fail"
    return InequalityReport(name, lhs, rhs, lhs / rhs, verdict, probe, notes)


# ---------------------------------------------------------------------------
# velocity error term


def _velocity_error_profile(f: Density, amp: float, q: float,
                            params: KernelParams, btilde=None,
                            theta_min=None, nz: int = 64, nphi: int = 8,
                            t_lo: float = 1e-3):
    """I(v), split at |z| = <v>/2, via the mass-point reordering.

    For each node v the kernel average of A(v') - A(v) is rewritten as an
    integral over mass points w of f times a line (plane in d = 3) integral
    across v - w; the +-z fold removes the principal value analytically and
    the small-angle cutoff caps the line at |z| = |v-w| / tan(theta_min/2).
    The piece of the line below t_lo is completed with the quadratic Taylor
    term of the fold.
    """
    grid = f.grid
    d = grid.d
    g = float(params.gamma)
    s = float(params.s)
    theta = _resolve_theta(params, theta_min)
    tanhalf = math.tan(0.5 * theta)
    if btilde is None:
        lo = float(params.btilde_lo)
        bt = lambda c: np.full_like(np.asarray(c, dtype=float), lo)
    else:
        bt = btilde
    pts = grid.points()
    fvals = f.values.ravel()
    cell = grid.cell
    n = len(pts)
    I1 = np.zeros(n)
    I2 = np.zeros(n)
    if amp == 0.0 or q == 0.0:
        return I1.reshape(grid.shape()), I2.reshape(grid.shape())
    u = np.linspace(0.0, 1.0, nz)
    du = np.full(nz, 1.0 / (nz - 1))
    du[0] *= 0.5
    du[-1] *= 0.5
    if d == 2:
        w_ang = np.array([1.0])
    else:
        phis = (np.arange(nphi) + 0.5) * math.pi / nphi
        w_ang = np.full(nphi, math.pi / nphi)
    for i in range(n):
        v = pts[i]
        wt = pts - v
        wn = np.linalg.norm(wt, axis=1)
        live = (wn > 0) & (fvals > 0)
        if not np.any(live):
            continue
        wt = wt[live]
        wn_l = wn[live]
        fw = fvals[live]
        normals = _canonical_normals(wt)
        if d == 2:
            nhat = normals[0][:, None, :]
        else:
            nhat = (np.cos(phis)[None, :, None] * normals[0][:, None, :]
                    + np.sin(phis)[None, :, None] * normals[1][:, None, :])
        t_hi = np.maximum(wn_l / tanhalf, t_lo * (1.0 + 1e-9))
        ratio = np.log(t_hi / t_lo)
        T = t_lo * np.exp(ratio[:, None] * u[None, :])
        w_t = T * ratio[:, None] * du[None, :]
        vsq = float(np.sum(v ** 2))
        br_v = math.sqrt(1.0 + vsq)
        Av = amp * br_v ** (-q)
        vdotn = np.sum(v[None, None, :] * nhat, axis=-1)
        Tn = T[:, None, :]
        plus = 1.0 + vsq + 2.0 * Tn * vdotn[:, :, None] + Tn ** 2
        minus = 1.0 + vsq - 2.0 * Tn * vdotn[:, :, None] + Tn ** 2
        G = (amp * plus ** (-0.5 * q) + amp * minus ** (-0.5 * q) - 2.0 * Av)
        cos_t = ((wn_l[:, None] ** 2 - T ** 2)
                 / (wn_l[:, None] ** 2 + T ** 2))
        contrib = G * (T ** (-(1.0 + 2.0 * s)) * bt(cos_t) * w_t)[:, None, :]
        far = (T >= 0.5 * br_v)[:, None, :]
        inner2 = np.sum(np.where(far, contrib, 0.0), axis=2) @ w_ang
        inner1 = np.sum(np.where(far, 0.0, contrib), axis=2) @ w_ang
        # quadratic completion of the fold below t_lo
        dd = amp * (q * (q + 2.0) * vdotn ** 2 * br_v ** (-q - 4.0)
                    - q * br_v ** (-q - 2.0))
        inner1 = inner1 + (dd @ w_ang) * float(bt(np.array([1.0]))[0]) \
            * t_lo ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s)
        row = fw * wn_l ** (g + 2.0 * s)
        I1[i] = 2.0 ** (d - 1) * float(row @ inner1) * cell
        I2[i] = 2.0 ** (d - 1) * float(row @ inner2) * cell
    return I1.reshape(grid.shape()), I2.reshape(grid.shape())


def _velocity_error_cq2(d: int, q: float) -> float:
    return _omega(d, 2) * q * (q + 4.0) / 2.0 * 2.0 ** (1.5 * (q + 2.0))


def error_velocity_term(f: Density, barrier, t: float, kappa: float,
                        params: KernelParams, hydro: HydroBounds,
                        btilde=None, theta_min=None, nz: int = 64,
                        probe: str = ""):
    """Kernel average of the barrier increment, split at |z| = <v>/2.

    Returns (I_total, I_near, I_far, report).  The verdict checks the far
    part nodewise against the closed-form constant C_{q,2} times the
    hydrodynamic mass factor; the integrated comparison against
    amp N_{gamma-q}(W^{q0-1}) yields the measured constant.
    """
    name = "error-velocity"
    grid = f.grid
    d = params.d
    base = derive_base(params)
    q0 = float(base.q0)
    q = float(barrier.q)
    amp = barrier.amplitude(t)
    I1, I2 = _velocity_error_profile(f, amp, q, params, btilde, theta_min,
                                     nz=nz)
    Itot = I1 + I2
    hydro_factor = float(hydro.M0) + float(hydro.E0)
    bhi = float(params.btilde_hi)
    cq2 = _velocity_error_cq2(d, q)
    notes = {"C_q2": cq2, "amplitude": amp, "q": q}
    if amp == 0.0 or q == 0.0:
        report = InequalityReport(name, 0.0, 0.0, None, "pass", probe,
                                  dict(notes, trivial=True,
                                       reason="flat or zero barrier"))
        return Itot, I1, I2, report
    envelope = cq2 * hydro_factor * bhi * amp \
        * grid.bracket() ** (float(params.gamma) - q)
    ratios = np.abs(I2) / envelope
    worst = float(np.max(ratios))
    idx = np.unravel_index(int(np.argmax(ratios)), grid.shape())
    notes["worst_node"] = [float(grid.axis()[i]) for i in idx]
    notes["hydro_factor"] = hydro_factor
    A = barrier.profile(t, grid)
    dots = phi0k(kappa, q0, f.values - A).phi_dot
    lhs_int = float(np.sum(dots * Itot) * grid.cell)
    W = _excess(f.values, A, kappa)
    denom = amp * _moment(grid, W ** (q0 - 1.0),
                          float(params.gamma) - q)
    c_one = abs(lhs_int) / denom if denom > 0 else None
    notes["integrated_lhs"] = lhs_int
    notes["integrated_weight"] = denom
    verdict = "pass" if worst <= 1.0 else "fail"
    report = InequalityReport(name, worst, 1.0, c_one, verdict, probe, notes)
    return Itot, I1, I2, report


def error_velocity_large_q(f: Density, barrier, t: float, kappa: float,
                           qstar: float, bstar: float, params: KernelParams,
                           hydro: HydroBounds, btilde=None, theta_min=None,
                           nz: int = 64, probe: str = "") -> InequalityReport:
    """Velocity error comparison beyond q = d+1 under the decay premise.

    The measured constant must stay under the 8^{qstar} growth envelope
    (times the hydrodynamic mass factor) that the closed-form constant
    obeys.
    """
    name = "error-velocity-large-q"
    grid = f.grid
    d = params.d
    g = float(params.gamma)
    s = float(params.s)
    q = float(barrier.q)
    if q <= d + 1:
        return InequalityReport(name, 0.0, 0.0, None, "inapplicable", probe,
                                {"reason": "decay exponent at most d+1",
                                 "q": q})
    if not float(qstar) > d + g + 2.0 * s:
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "qstar within the moment "
                                        "window", "qstar": qstar})
    envelope = float(bstar) * grid.bracket() ** (-float(qstar))
    if np.any(f.values > envelope * (1.0 + 1e-12)):
        idx = np.unravel_index(int(np.argmax(f.values - envelope)),
                               grid.shape())
        node = [float(grid.axis()[i]) for i in idx]
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "decay premise violated",
                                        "violating_node": node})
    base = derive_base(params)
    q0 = float(base.q0)
    amp = barrier.amplitude(t)
    I1, I2 = _velocity_error_profile(f, amp, q, params, btilde, theta_min,
                                     nz=nz)
    A = barrier.profile(t, grid)
    dots = phi0k(kappa, q0, f.values - A).phi_dot
    lhs_int = float(np.sum(dots * (I1 + I2)) * grid.cell)
    W = _excess(f.values, A, kappa)
    denom = amp * _moment(grid, W ** (q0 - 1.0), g - q)
    growth = 8.0 ** float(qstar) * max(1.0, float(hydro.M0)
                                       + float(hydro.E0))
    notes = {"amplitude": amp, "qstar": qstar, "growth_envelope": growth}
    if denom == 0.0:
        verdict = "pass" if lhs_int <= 0.0 else "fail"
        return InequalityReport(name, lhs_int, 0.0, None, verdict, probe,
                                dict(notes, trivial=True,
                                     reason="f stays below the barrier"))
    c_meas = max(lhs_int, 0.0) / denom
    verdict = "pass" if c_meas <= growth else "fail"
    return InequalityReport(name, c_meas, growth, c_meas, verdict, probe,
                            notes)


# ---------------------------------------------------------------------------
# error terms against the gamma-convolution


def hard_error_terms(f: Density, barrier, t: float, kappa: float, eps: float,
                     params: KernelParams, hydro: HydroBounds,
                     probe: str = "") -> InequalityReport:
    """Splits Phi(f)(f * |.|^gamma) into an absorbable strong-norm piece and
    a moment piece, for gamma >= 0 and decay exponents within the window.

    The measured constant multiplies (amp + C(eps)) N_{gamma-q}(W^{q0-1});
    the verdict checks the convolution nodewise against its moment envelope
    m (<v>^gamma + 1) + e2, which the lattice sum obeys exactly.
    """
    name = "hard-error"
    d = params.d
    g = float(params.gamma)
    if g < 0:
        return InequalityReport(name, 0.0, 0.0, None, "inapplicable", probe,
                                {"reason": "soft potential"})
    q = float(barrier.q)
    if q > d + 1:
        return InequalityReport(name, 0.0, 0.0, None, "inapplicable", probe,
                                {"reason": "decay exponent above d+1",
                                 "q": q})
    if not eps > 0:
        raise ValueError("eps must be positive")
    grid = f.grid
    base = derive_base(params)
    q0, p0, k0 = float(base.q0), float(base.p0), float(base.k0)
    amp = barrier.amplitude(t)
    A = barrier.profile(t, grid)
    W = _excess(f.values, A, kappa)
    conv = convolve_gamma(f, g).values
    lhs = float(np.sum(_capital_phi(f.values, A, kappa, q0) * conv)
                * grid.cell)
    strong = weighted_lp_norm(Density(grid, W ** q0), p0, k0)
    c_eps = absorption_constant(params, eps, float(hydro.E0))
    tail = _moment(grid, W ** (q0 - 1.0), g - q)
    denom = (amp + c_eps) * tail
    c_hard = max(lhs - eps * strong, 0.0) / denom if denom > 0 else None
    rhs = eps * strong + (c_hard or 0.0) * denom
    mass, _, e2 = moments(f)
    env = mass * (grid.bracket() ** g + 1.0) + e2
    worst = float(np.max(conv - env))
    verdict = "pass" if worst <= 1e-12 * float(np.max(env)) else "fail"
    notes = {"eps": eps, "absorption": c_eps, "strong_norm": strong,
             "envelope_slack": worst, "amplitude": amp}
    return InequalityReport(name, lhs, rhs, c_hard, verdict, probe, notes)


def _soft_report(name, lhs, rhs, const, verdict, probe, notes):
    return InequalityReport(name, lhs, rhs, const, verdict, probe, notes)


def soft_error_split(f: Density, barrier, t: float, kappa: float,
                     params: KernelParams, hydro: HydroBounds, measured=None,
                     safety: float = 4.0, probe: str = ""):
    """Four-piece split of Phi(f)(f * |.|^gamma) for gamma < 0.

    Returns (E2, E3, E4, E5, reports).  The split decomposes the convolution
    argument as f = (f ^ A) + W + (f - A - kappa)_+, so the pieces reassemble
    the unsplit integral exactly up to roundoff; that identity is always
    checked.  Per-piece comparisons against the measured constants run only
    when measured is given.
    """
    g = float(params.gamma)
    if g >= 0:
        rep = InequalityReport("soft-error-sum", 0.0, 0.0, None,
                               "inapplicable", probe,
                               {"reason": "hard potential"})
        return 0.0, 0.0, 0.0, 0.0, [rep]
    grid = f.grid
    d = params.d
    s = float(params.s)
    base = derive_base(params)
    q0, p0, k0 = float(base.q0), float(base.p0), float(base.k0)
    qnsl = float(base.qnsl)
    cb = cb_constant(params)
    q = float(barrier.q)
    amp = barrier.amplitude(t)
    A = barrier.profile(t, grid)
    W = _excess(f.values, A, kappa)
    low = np.minimum(f.values, A)
    over = np.maximum(f.values - A - kappa, 0.0)
    conv_f = convolve_gamma(f, g).values
    conv_low = convolve_gamma(Density(grid, low), g).values
    conv_w = convolve_gamma(Density(grid, W), g).values
    conv_over = convolve_gamma(Density(grid, over), g).values
    cell = grid.cell
    front = q0 * A * W ** (q0 - 1.0)
    E2 = cb * float(np.sum(front * conv_low) * cell)
    E3 = cb * float(np.sum(front * conv_w) * cell)
    E4 = cb * (q0 - 1.0) * float(np.sum(W ** q0 * conv_f) * cell)
    E5 = cb * float(np.sum(front * conv_over) * cell)
    unsplit = cb * float(np.sum(_capital_phi(f.values, A, kappa, q0)
                                * conv_f) * cell)
    gap = abs(E2 + E3 + E4 + E5 - unsplit)
    tol = 1e-10 * abs(unsplit) + 1e-16
    reports = [InequalityReport(
        "soft-error-sum", gap, tol, None,
        "pass" if gap <= tol else "fail", probe,
        {"unsplit": unsplit, "pieces": [E2, E3, E4, E5]})]
    if measured is None:
        return E2, E3, E4, E5, reports

    C_get = measured.good_extra
    C_cor = measured.coercivity
    C_cor2 = measured.coercivity_second
    c0 = measured.c0
    missing = [n for n, v in (("good_extra", C_get), ("coercivity", C_cor),
                              ("coercivity_second", C_cor2), ("c0", c0))
               if v in (None, 0.0)]
    if missing:
        raise ValueError("missing measured constants: " + ", ".join(missing))
    lq = float(moment_exponent_lq(params, q))
    n_lq = _moment(grid, W ** (q0 - 1.0), lq)
    strong = weighted_lp_norm(Density(grid, W ** q0), p0, k0)
    good = C_get * amp ** (1.0 + 2.0 * s / d) * n_lq
    a_get = 2.0 ** (d + 1) * (float(hydro.M0) + float(hydro.E0)) / float(c0)
    omega = _omega(d, 1)
    c_q3 = omega * (2.0 * math.sqrt(2.0)) ** q / (d + g)
    M0 = float(hydro.M0)
    thr2 = max(2.0 ** d * M0 / c_q3,
               safety * (2.0 / C_get) ** (d / (g + 2.0 * s)), a_get)
    thr3 = max(safety * (8.0 * q0 * cb * M0 / C_get) ** (d / (2.0 * s)),
               a_get)

    def piece(nm, val, bound, threshold, extra=None):
        notes = {"amplitude": amp, "required_amplitude": threshold}
        if extra:
            notes.update(extra)
        if amp < threshold:
            return _soft_report(nm, val, bound, None, "precondition-failed",
                                probe, dict(notes,
                                            reason="amplitude below floor"))
        verdict = "pass" if val <= bound else "fail"
        return _soft_report(nm, val, bound, None, verdict, probe, notes)

    reports.append(piece("soft-error-E2", E2, 0.5 * good, thr2))
    win3 = d + 1.0 + d * g / (2.0 * s)
    if q > win3:
        reports.append(_soft_report("soft-error-E3", E3, 0.0, None,
                                    "inapplicable", probe,
                                    {"reason": "q above the window",
                                     "window": win3}))
    else:
        reports.append(piece("soft-error-E3", E3,
                             0.5 * C_cor * strong + 0.25 * good, thr3))
    win4 = d / (2.0 * s) * k0
    if q > win4:
        reports.append(_soft_report("soft-error-E4", E4, 0.0, None,
                                    "inapplicable", probe,
                                    {"reason": "q above the window",
                                     "window": win4}))
    else:
        reports.append(piece("soft-error-E4", E4,
                             0.25 * C_cor * strong + 0.125 * good, a_get))
    branch_pt = -2.0 * s * d / (d + 2.0 * s)
    win5_lo = d - 1.0 - 2.0 * s * (d - 2.0) / (d + 2.0 * s)
    in_win5 = q <= qnsl and (g >= branch_pt or q >= win5_lo)
    c5 = None
    norm5 = weighted_lp_norm(Density(grid, over), p0, k0)
    tail5 = _moment(grid, over, g)
    nlevel = _moment(grid, W ** (q0 - 1.0), -(d - 1.0))
    if not in_win5:
        reports.append(_soft_report("soft-error-E5", E5, 0.0, None,
                                    "inapplicable", probe,
                                    {"reason": "q outside the window"}))
        term_cor2 = 0.0
    elif not np.any(over > 0):
        reports.append(_soft_report("soft-error-E5", 0.0, 0.0, None, "pass",
                                    probe,
                                    {"reason": "truncation exhausts the "
                                     "excess", "trivial": True}))
        term_cor2 = 0.0
    else:
        term1 = good / 16.0
        term_cor2 = (0.5 * C_cor2 * kappa ** (2.0 * s / d * q0)
                     * nlevel ** (-2.0 * s / d) * tail5)
        c5 = max(E5 - term1 - term_cor2, 0.0) / norm5
        bound5 = term1 + term_cor2 + c5 * norm5
        rep = piece("soft-error-E5", E5, bound5, a_get)
        rep.empirical_constant = c5
        reports.append(rep)
    agg_rhs = (0.75 * C_cor * strong + (15.0 / 16.0) * good
               + (c5 or 0.0) * norm5 + term_cor2)
    agg_floor = max(thr2, thr3, a_get)
    if not in_win5:
        reports.append(_soft_report("soft-error-aggregate", unsplit, agg_rhs,
                                    None, "inapplicable", probe,
                                    {"reason": "q outside the window"}))
    elif amp < agg_floor:
        reports.append(_soft_report("soft-error-aggregate", unsplit, agg_rhs,
                                    None, "precondition-failed", probe,
                                    {"required_amplitude": agg_floor,
                                     "amplitude": amp}))
    else:
        verdict = "pass" if unsplit <= agg_rhs else "fail"
        reports.append(_soft_report("soft-error-aggregate", unsplit, agg_rhs,
                                    None, verdict, probe,
                                    {"required_amplitude": agg_floor,
                                     "amplitude": amp}))
    return E2, E3, E4, E5, reports


def soft_error_large_q(f: Density, barrier, t: float, kappa: float,
                       qstar: float, bstar: float, params: KernelParams,
                       hydro: HydroBounds, measured,
                       probe: str = "") -> InequalityReport:
    """Error-term comparison beyond the moment window, for gamma < 0.

    Under the decay premise f <= bstar <v>^{-qstar} the gamma-convolution
    obeys a closed-form envelope; the unsplit error integral is compared to
    the decay-weighted extra term plus the envelope-sized remainder.
    """
    name = "soft-error-large-q"
    g = float(params.gamma)
    if g >= 0:
        return InequalityReport(name, 0.0, 0.0, None, "inapplicable", probe,
                                {"reason": "hard potential"})
    grid = f.grid
    d = params.d
    s = float(params.s)
    base = derive_base(params)
    q0 = float(base.q0)
    q = float(barrier.q)
    qs = float(qstar)
    bs = float(bstar)
    envelope = bs * grid.bracket() ** (-qs)
    if np.any(f.values > envelope * (1.0 + 1e-12)):
        idx = np.unravel_index(int(np.argmax(f.values - envelope)),
                               grid.shape())
        node = [float(grid.axis()[i]) for i in idx]
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "decay premise violated",
                                        "violating_node": node})
    M0 = float(hydro.M0)
    omega = _omega(d, 1)
    c_qs = omega * (2.0 * math.sqrt(2.0)) ** qs / (d + g)
    if bs < 2.0 ** d * M0 / c_qs:
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "bstar below the mass "
                                        "floor",
                                        "floor": 2.0 ** d * M0 / c_qs})
    C_vget = getattr(measured, "very_good_extra", None)
    if C_vget in (None, 0.0):
        raise ValueError("missing measured constant: very_good_extra")
    cb = cb_constant(params)
    conv_const = 2.0 * c_qs ** (-g / d) * M0 ** (1.0 + g / d)
    amp = barrier.amplitude(t)
    floor = (16.0 * q0 * cb * conv_const / float(C_vget)
             * bs ** (1.0 - g / (2.0 * s * d)))
    if amp < floor:
        return InequalityReport(name, 0.0, 0.0, None, "precondition-failed",
                                probe, {"reason": "amplitude below floor",
                                        "floor": floor, "amplitude": amp})
    gmin = g * min(1.0, qs / d)
    conv_f = convolve_gamma(f, g).values
    conv_env = conv_const * bs ** (-g / d) * grid.bracket() ** gmin
    conv_worst = float(np.max(conv_f / conv_env))
    A = barrier.profile(t, grid)
    W = _excess(f.values, A, kappa)
    lhs = cb * float(np.sum(_capital_phi(f.values, A, kappa, q0) * conv_f)
                     * grid.cell)
    term_decay = (0.5 * float(C_vget) * amp ** (1.0 + 2.0 * s)
                  / bs ** (2.0 * s)
                  * _moment(grid, W ** (q0 - 1.0), g + 2.0 * s - q))
    c_under = conv_const * (q0 - 1.0) * cb
    term_env = c_under * bs ** (1.0 - g / d) \
        * _moment(grid, W ** (q0 - 1.0), gmin - qs)
    rhs = term_decay + term_env
    notes = {"amplitude": amp, "floor": floor,
             "convolution_worst_ratio": conv_worst,
             "decay_term": term_decay, "envelope_term": term_env}
    if lhs == 0.0 and rhs == 0.0:
        return InequalityReport(name, 0.0, 0.0, None, "pass", probe,
                                dict(notes, trivial=True))
    ok = conv_worst <= 1.0 and lhs <= rhs
    return InequalityReport(name, lhs, rhs, None,
                            "pass" if ok else "fail", probe, notes)


# ---------------------------------------------------------------------------
# constant measurement and the suite


class _FlatBarrier:
    """Time-independent reference barrier used for measuring ratios."""

    def __init__(self, q, amp):
        self.q = q
        self._amp = float(amp)

    def amplitude(self, t):
        return self._amp

    def profile(self, t, grid):
        return self._amp * grid.bracket() ** (-float(self.q))


def measure_constants(f: Density, params: KernelParams, hydro: HydroBounds,
                      kappa: float, quad=None, btilde=None, theta_min=None,
                      kmatrix=None, probe_name: str = "",
                      eps_fraction: float = 0.5) -> EmpiricalConstants:
    """All empirical constants of one probe in a single pass.

    The cone scan runs at level zero so the reported c0 is the full angular
    mass and lambda0 the weakest sustained level.  Ratio constants are
    measured on reference barriers whose amplitude is half the maximum of
    f <v>^q, which guarantees the barrier is crossed; the amplitude
    thresholds of the lemmas gate their application, not the measurement.
    """
    grid = f.grid
    d = params.d
    g = float(params.gamma)
    s = float(params.s)
    base = derive_base(params)
    q0 = float(base.q0)
    K = _resolve_kmatrix(f, params, quad, btilde, theta_min, kmatrix)
    if quad is None:
        quad = HyperplaneQuadrature()
    origin = np.zeros(d)
    _, lambda0, c0 = cone_estimate(f, origin, 0.0, params, quad, btilde)
    ubp = upper_bound_profile(f, origin, (0.5, 1.0, 1.5), params, quad,
                              btilde)
    rep_cor = coercivity_first(f, f, kappa, params, hydro, kmatrix=K,
                               probe=probe_name)
    C_cor = rep_cor.empirical_constant
    kappa2 = 0.5 * float(np.max(f.values))
    rep_cor2 = second_coercivity(f, f, kappa2, params, hydro, kmatrix=K,
                                 probe=probe_name)
    C_cor2 = rep_cor2.empirical_constant

    q_ref = min(float(base.qnsl), d + 1.0)
    bracket = grid.bracket()
    amp_ref = 0.5 * float(np.max(f.values * bracket ** q_ref))
    A_ref = amp_ref * bracket ** (-q_ref)
    lhs, rhs = _good_extra_sides(f, A_ref, amp_ref, q_ref, kappa, params, K)
    C_get = lhs / rhs if rhs > 0 else None

    q_v = q_ref + 2.0 * s
    bstar_ref = float(np.max(f.values * bracket ** q_ref))
    amp_v = 0.5 * float(np.max(f.values * bracket ** q_v))
    A_v = amp_v * bracket ** (-q_v)
    lhs_v, rhs_v = _good_extra_sides(f, A_v, amp_v, q_v, kappa, params, K,
                                     rhs_kind="decay", bstar=bstar_ref)
    C_vget = lhs_v / rhs_v if rhs_v > 0 else None

    I1, I2 = _velocity_error_profile(f, amp_ref, q_ref, params, btilde,
                                     theta_min)
    dots = phi0k(kappa, q0, f.values - A_ref).phi_dot
    lhs_i = float(np.sum(dots * (I1 + I2)) * grid.cell)
    W_ref = _excess(f.values, A_ref, kappa)
    den_i = amp_ref * _moment(grid, W_ref ** (q0 - 1.0), g - q_ref)
    C_one = abs(lhs_i) / den_i if den_i > 0 else None

    C_hard = None
    if g >= 0 and C_cor:
        eps = eps_fraction * C_cor
        conv = convolve_gamma(f, g).values
        lhs_h = float(np.sum(_capital_phi(f.values, A_ref, kappa, q0) * conv)
                      * grid.cell)
        strong = weighted_lp_norm(Density(grid, W_ref ** q0), float(base.p0),
                                  float(base.k0))
        c_eps = absorption_constant(params, eps, float(hydro.E0))
        den_h = (amp_ref + c_eps) * _moment(grid, W_ref ** (q0 - 1.0),
                                            g - q_ref)
        if den_h > 0:
            C_hard = max(lhs_h - eps * strong, 0.0) / den_h

    return EmpiricalConstants(lambda0=float(lambda0), c0=float(c0),
                              Lambda0=float(ubp["Lambda0"]),
                              measured_on=probe_name, coercivity=C_cor,
                              coercivity_second=C_cor2, good_extra=C_get,
                              very_good_extra=C_vget, velocity_error=C_one,
                              hard_error=C_hard)


def estimate_suite(f: Density, params: KernelParams, hydro: HydroBounds,
                   barrier, t: float, kappa: float, qstar: float = None,
                   bstar: float = None, measured=None, eps: float = None,
                   threads: int = 1, quad=None, btilde=None, theta_min=None,
                   probe: str = "") -> list:
    """Run every applicable estimate check on one probe.

    The kernel matrix is built once up front (single writer) and shared
    read-only by the checks, which are independent of each other and may run
    on a thread pool.  Reports come back sorted by name for deterministic
    output.
    """
    K = _resolve_kmatrix(f, params, quad, btilde, theta_min, kmatrix=None)
    if measured is None:
        measured = measure_constants(f, params, hydro, kappa, quad, btilde,
                                     theta_min, kmatrix=K,
                                     probe_name=probe)
    if eps is None:
        eps = 0.5 * (measured.coercivity or 1.0)
    g = float(params.gamma)

    jobs = [
        lambda: coercivity_first(f, f, kappa, params, hydro, kmatrix=K,
                                 probe=probe),
        lambda: second_coercivity(f, f, 0.5 * float(np.max(f.values)),
                                  params, hydro, kmatrix=K, probe=probe),
        lambda: good_extra_term(f, barrier, t, kappa, params, hydro,
                                measured.c0, kmatrix=K, probe=probe),
        lambda: error_velocity_term(f, barrier, t, kappa, params, hydro,
                                    btilde, theta_min, probe=probe)[3],
    ]
    if qstar is not None and bstar is not None:
        jobs.append(lambda: very_good_extra_term(
            f, barrier, t, kappa, qstar, bstar, params, hydro, kmatrix=K,
            probe=probe))
        jobs.append(lambda: error_velocity_large_q(
            f, barrier, t, kappa, qstar, bstar, params, hydro, btilde,
            theta_min, probe=probe))
    if g >= 0:
        jobs.append(lambda: hard_error_terms(f, barrier, t, kappa, eps,
                                             params, hydro, probe=probe))
    else:
        jobs.append(lambda: soft_error_split(f, barrier, t, kappa, params,
                                             hydro, measured,
                                             probe=probe)[4])
        if qstar is not None and bstar is not None:
            jobs.append(lambda: soft_error_large_q(
                f, barrier, t, kappa, qstar, bstar, params, hydro, measured,
                probe=probe))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = [fut.result() for fut in
                       [pool.submit(job) for job in jobs]]
    else:
        results = [job() for job in jobs]
    reports = []
    for r in results:
        if isinstance(r, list):
            reports.extend(r)
        else:
            reports.append(r)
    reports.sort(key=lambda r: (r.name, r.probe))
    return reports
