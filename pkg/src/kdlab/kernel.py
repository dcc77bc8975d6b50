"""Hyperplane-quadrature evaluation of the Carleman-form kernel

    K_f(v, v') = 2^{d-1} |v'-v|^{-(d+2s)} int_{w perp v'-v} f(v+w)
                 |w|^{gamma+2s+1} btilde(cos theta) dw

together with empirical measurements of its structure: symmetry,
principal-value cancellation against the gamma-convolution, the local
upper-bound profile, and the cone of non-degeneracy.

The hyperplane basis is canonicalized on the direction of v'-v up to sign, so
K_f(v, v+w) and K_f(v, v-w) are evaluated on bitwise-identical node sets and
the symmetry residual vanishes by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exponents import KernelParams
from .vgrid import Density, GridSpec, convolve_gamma, sample

_CHUNK = 40_000


@dataclass(frozen=True)
class HyperplaneQuadrature:
    """Symmetric trapezoid rule on the line (d=2) or plane (d=3) w perp p.

    extent is the multiple of <v> limiting |w| (clipped at 2R); n_nodes is
    per axis and odd so the foot point w = 0 is a node.
    """

    n_nodes: int = 65
    extent: float = 4.0

    def __post_init__(self):
        if self.n_nodes < 3 or self.n_nodes % 2 == 0:
            raise ValueError("n_nodes must be odd and >= 3")
        if not self.extent > 0:
            raise ValueError("extent must be positive")


@dataclass
class EmpiricalConstants:
    """Measured coercivity/cone/upper-bound levels for one probe density.

    The fields past measured_on are filled in by the estimate suite; None
    means the corresponding constant has not been measured yet.
    """

    lambda0: float
    c0: float
    Lambda0: float
    measured_on: str = ""
    coercivity: float = None
    coercivity_second: float = None
    good_extra: float = None
    very_good_extra: float = None
    velocity_error: float = None
    hard_error: float = None


def _btilde_callable(params: KernelParams, btilde):
    if btilde is not None:
        return btilde
    lo = float(params.btilde_lo)
    return lambda c: np.full_like(np.asarray(c, dtype=float), lo)


def _canonical_normals(p: np.ndarray):
    """Orthonormal basis of the hyperplane perp to each row of p, depending
    on p only through its unoriented direction."""
    d = p.shape[1]
    norm = np.linalg.norm(p, axis=1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("v and vprime must differ")
    phat = p / norm
    # canonical sign: first component of largest magnitude made positive
    lead = np.take_along_axis(phat, np.argmax(np.abs(phat), axis=1)[:, None], axis=1)
    phat = phat * np.sign(lead)
    if d == 2:
        n1 = np.stack([-phat[:, 1], phat[:, 0]], axis=1)
        return (n1,)
    helper = np.zeros_like(phat)
    helper[np.arange(len(phat)), np.argmin(np.abs(phat), axis=1)] = 1.0
    e1 = np.cross(phat, helper)
    e1 = e1 / np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(phat, e1)
    return e1, e2


def _line_nodes(n: int):
    # trapezoid nodes and weights on [-1, 1]
    t = np.linspace(-1.0, 1.0, n)
    w = np.full(n, 2.0 / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return t, w


def _eval_batch(f: Density, params: KernelParams, quad: HyperplaneQuadrature,
                V: np.ndarray, VP: np.ndarray, btilde,
                theta_min: float = None) -> np.ndarray:
    """Kernel values for M (v, v') pairs; V, VP of shape (M, d).

    theta_min, when given, restricts the hyperplane integral to
    |w| <= |p| / tan(theta_min/2), the exact image of the sigma-form's
    small-angle cutoff under tan(theta/2) = |p|/|w|.
    """
    d = f.grid.d
    g = float(params.gamma)
    s = float(params.s)
    bt = _btilde_callable(params, btilde)
    p = VP - V
    pn = np.linalg.norm(p, axis=1)
    if np.any(pn == 0):
        raise ValueError("v and vprime must differ")
    normals = _canonical_normals(p)
    bracket_v = np.sqrt(1.0 + np.sum(V ** 2, axis=1))
    T = np.minimum(quad.extent * bracket_v, 2.0 * f.grid.R)
    if theta_min is not None:
        # clipping the extent keeps the truncated kernel smooth in |p|;
        # node masking alone would staircase it (d=3 corners still masked)
        T = np.minimum(T, pn / math.tan(0.5 * theta_min))
    t, wt = _line_nodes(quad.n_nodes)
    if d == 2:
        offs = T[:, None] * t[None, :]
        pts = V[:, None, :] + offs[:, :, None] * normals[0][:, None, :]
        wnorm = np.abs(offs)
        weights = (T[:, None] * wt[None, :])
    else:
        t1, t2 = np.meshgrid(t, t, indexing="ij")
        w1, w2 = np.meshgrid(wt, wt, indexing="ij")
        t1 = t1.ravel()[None, :]
        t2 = t2.ravel()[None, :]
        ww = (w1 * w2).ravel()[None, :]
        off1 = T[:, None] * t1
        off2 = T[:, None] * t2
        pts = (V[:, None, :]
               + off1[:, :, None] * normals[0][:, None, :]
               + off2[:, :, None] * normals[1][:, None, :])
        wnorm = np.hypot(off1, off2)
        weights = T[:, None] ** 2 * ww
    fvals = sample(f, pts.reshape(-1, d)).reshape(pts.shape[:2])
    with np.errstate(divide="ignore", invalid="ignore"):
        sing = np.where(wnorm > 0, wnorm ** (g + 2.0 * s + 1.0), 0.0)
        cos_theta = (wnorm ** 2 - pn[:, None] ** 2) / (wnorm ** 2 + pn[:, None] ** 2)
    if theta_min is not None:
        sing = np.where(wnorm * math.tan(0.5 * theta_min) <= pn[:, None],
                        sing, 0.0)
    integral = np.sum(fvals * sing * bt(cos_theta) * weights, axis=1)
    return 2.0 ** (d - 1) * pn ** (-(d + 2.0 * s)) * integral


def kernel_eval(f: Density, v, vprime, params: KernelParams,
                quad: HyperplaneQuadrature = HyperplaneQuadrature(),
                btilde=None, theta_min: float = None) -> float:
    v = np.asarray(v, dtype=float)
    vprime = np.asarray(vprime, dtype=float)
    return float(_eval_batch(f, params, quad, v[None], vprime[None], btilde,
                             theta_min)[0])


def kernel_eval_many(f: Density, V, VP, params: KernelParams,
                     quad: HyperplaneQuadrature = HyperplaneQuadrature(),
                     btilde=None, theta_min: float = None) -> np.ndarray:
    """Chunked batch kernel evaluation over (M, d) arrays of pairs."""
    V = np.asarray(V, dtype=float)
    VP = np.asarray(VP, dtype=float)
    out = np.empty(len(V))
    step = max(1, _CHUNK // max(1, quad.n_nodes ** (f.grid.d - 1)))
    for i in range(0, len(V), step):
        out[i:i + step] = _eval_batch(f, params, quad, V[i:i + step],
                                      VP[i:i + step], btilde, theta_min)
    return out


def kernel_matrix(f: Density, params: KernelParams,
                  quad: HyperplaneQuadrature = HyperplaneQuadrature(),
                  btilde=None, theta_min: float = None) -> np.ndarray:
    """K_f at every ordered pair of distinct grid nodes.

    Returns an (N^d, N^d) array with zero diagonal; entry [i, j] is
    K_f(node_i, node_j).  Built once, read many times by the principal-value
    sums; writing happens before any concurrent reads.
    """
    pts = f.grid.points()
    n = len(pts)
    out = np.zeros((n, n))
    idx_i, idx_j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mask = idx_i != idx_j
    ii = idx_i[mask]
    jj = idx_j[mask]
    out[ii, jj] = kernel_eval_many(f, pts[ii], pts[jj], params, quad, btilde,
                                   theta_min)
    return out


def kernel_symmetry_residual(f: Density, v, w_samples, params: KernelParams,
                             quad: HyperplaneQuadrature = HyperplaneQuadrature(),
                             btilde=None) -> float:
    """max over samples of |K(v, v+w) - K(v, v-w)| / (|K(v, v+w)| + eps)."""
    v = np.asarray(v, dtype=float)
    W = np.asarray(w_samples, dtype=float).reshape(-1, f.grid.d)
    V = np.broadcast_to(v, W.shape)
    plus = kernel_eval_many(f, V, V + W, params, quad, btilde)
    minus = kernel_eval_many(f, V, V - W, params, quad, btilde)
    eps = np.finfo(float).eps
    return float(np.max(np.abs(plus - minus) / (np.abs(plus) + eps)))


def _pv_direction_set(d: int, n_dirs: int):
    # antipodal representatives only; the caller pairs each with its negative
    if d == 2:
        ang = np.pi * (np.arange(n_dirs) + 0.5) / n_dirs
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    k = np.arange(n_dirs)
    z = (k + 0.5) / n_dirs
    phi = np.pi * (np.sqrt(5.0) - 1.0) * k
    rho = np.sqrt(1.0 - z ** 2)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def _excluded_offsets(d: int, h: float, eps_pv: float) -> np.ndarray:
    m = int(np.ceil(eps_pv / h)) + 1
    rng = np.arange(-m, m + 1)
    mesh = np.meshgrid(*([rng] * d), indexing="ij")
    offs = np.stack([ax.ravel() for ax in mesh], axis=1)
    return offs[np.linalg.norm(offs, axis=1) * h < eps_pv]


def _ray_exit(offsets: np.ndarray, h: float, dirs: np.ndarray) -> np.ndarray:
    """Exit parameter of the ray t*dir, t >= 0, from the union of the grid
    cells centered at offsets*h.  The union is star-shaped about the origin
    for the lattice balls used here, so the largest cell-exit time is the
    boundary of the region along the ray.
    """
    lo = offsets * h - 0.5 * h
    hi = offsets * h + 0.5 * h
    exits = np.zeros(len(dirs))
    for j, u in enumerate(dirs):
        tmin = np.zeros(len(lo))
        tmax = np.full(len(lo), np.inf)
        ok = np.ones(len(lo), dtype=bool)
        for i in range(offsets.shape[1]):
            if abs(u[i]) < 1e-15:
                ok &= (lo[:, i] <= 0.0) & (0.0 <= hi[:, i])
            else:
                a = lo[:, i] / u[i]
                b = hi[:, i] / u[i]
                tmin = np.maximum(tmin, np.minimum(a, b))
                tmax = np.minimum(tmax, np.maximum(a, b))
        ok &= tmax >= tmin
        if np.any(ok):
            exits[j] = float(np.max(tmax[ok]))
    return exits


def polar_pv_patch(g, v, eps_pv: float, grid: GridSpec, s: float,
                   n_r: int = 10, n_dirs: int = None, r_knots=()) -> float:
    """Quadrature of int g(v') dv' over the union of the grid cells whose
    nodes fall inside the principal-value radius around v.

    The region matches what the masked lattice sum leaves out (midpoint rule
    assigns each kept node its full cell), so patch + lattice sum tile the
    plane without overlap.  Directions are antipodally paired and radii are
    graded as u = r^{2-2s}; with that grading the leading r^{2-d-2s} behavior
    of paired differences becomes constant in u, so midpoints capture it.

    r_knots lists radii where g has a known radial kink (a truncated
    kernel's clip crossover, for instance); the radial rule restarts there,
    each panel getting n_r graded midpoints.

    g maps an (M, d) array of points to values.
    """
    d = grid.d
    offs = _excluded_offsets(d, grid.h, eps_pv)
    if len(offs) == 0:
        return 0.0
    if n_dirs is None:
        n_dirs = 32 if d == 2 else 48
    dirs = _pv_direction_set(d, n_dirs)
    r_max = _ray_exit(offs, grid.h, dirs)
    expo = 2.0 - 2.0 * s
    sphere = 2.0 * np.pi if d == 2 else 4.0 * np.pi
    w_ang = sphere / (2 * n_dirs)
    v = np.asarray(v, dtype=float)
    cuts = [np.minimum(float(k), r_max) for k in sorted(r_knots) if k > 0.0]
    panels = list(zip([np.zeros(n_dirs)] + cuts, cuts + [r_max]))
    total = 0.0
    for lo, hi in panels:
        span = (hi ** expo - lo ** expo)[:, None]
        u_edges = (lo ** expo)[:, None] + np.linspace(0.0, 1.0, n_r + 1)[None, :] * span
        u_mid = 0.5 * (u_edges[:, :-1] + u_edges[:, 1:])
        du = np.diff(u_edges, axis=1)
        r_mid = u_mid ** (1.0 / expo)
        # r^{d-1} dr = r^{d-2+2s} du / (2-2s)
        w_rad = r_mid ** (d - 2.0 + 2.0 * s) * du / expo
        pts_plus = v[None, None, :] + r_mid[:, :, None] * dirs[:, None, :]
        pts_minus = v[None, None, :] - r_mid[:, :, None] * dirs[:, None, :]
        shape = pts_plus.shape[:2]
        vals = (g(pts_plus.reshape(-1, d)).reshape(shape)
                + g(pts_minus.reshape(-1, d)).reshape(shape))
        total += float(np.sum(vals * w_rad * w_ang))
    return total


def _box_exit(v, dirs: np.ndarray, half: float) -> np.ndarray:
    """Exit parameter of rays v + t*dir from the cube [-half, half]^d."""
    t = np.full(len(dirs), np.inf)
    for i in range(dirs.shape[1]):
        ui = dirs[:, i]
        with np.errstate(divide="ignore"):
            cand = np.where(ui > 0, (half - v[i]) / ui,
                            np.where(ui < 0, (-half - v[i]) / ui, np.inf))
        t = np.minimum(t, cand)
    return t


def far_field_difference(f: Density, v, params: KernelParams,
                         quad: HyperplaneQuadrature = HyperplaneQuadrature(),
                         btilde=None, n_r: int = 8, n_dirs: int = None) -> float:
    """Completes int (K(v,v') - K(v',v)) dv' beyond the cell-tiled box.

    The forward kernel sees f on the hyperplane through v, so it only decays
    like |v'-v|^{-(d+2s)} and the box truncation alone loses O(R^{-2s}) of
    the integral.  Radii are graded as u = r^{-2s}, which turns the leading
    radial integrand into a constant in u.
    """
    grid = f.grid
    d = grid.d
    if n_dirs is None:
        n_dirs = 32 if d == 2 else 48
    reps = _pv_direction_set(d, n_dirs)
    dirs = np.concatenate([reps, -reps], axis=0)
    v = np.asarray(v, dtype=float)
    half = grid.R + 0.5 * grid.h
    t0 = _box_exit(v, dirs, half)
    ts = 2.0 * float(params.s)
    u_edges = np.linspace(0.0, 1.0, n_r + 1)[None, :] * (t0 ** -ts)[:, None]
    u_mid = 0.5 * (u_edges[:, :-1] + u_edges[:, 1:])
    du = np.diff(u_edges, axis=1)
    r = u_mid ** (-1.0 / ts)
    # r^{d-1} dr = r^{d+2s} du / (2s)
    w_rad = r ** (d + ts) * du / ts
    sphere = 2.0 * np.pi if d == 2 else 4.0 * np.pi
    w_ang = sphere / len(dirs)
    pts = (v[None, None, :] + r[:, :, None] * dirs[:, None, :]).reshape(-1, d)
    base = np.broadcast_to(v, pts.shape)
    vals = (kernel_eval_many(f, base, pts, params, quad, btilde)
            - kernel_eval_many(f, pts, base, params, quad, btilde))
    return float(np.sum(vals.reshape(r.shape) * w_rad * w_ang))


def _node_index(grid: GridSpec, v) -> tuple:
    v = np.asarray(v, dtype=float)
    idx = np.rint((v + grid.R) / grid.h).astype(int)
    node = -grid.R + idx * grid.h
    if np.max(np.abs(node - v)) > 1e-9 * max(1.0, grid.h):
        raise ValueError("v must be a grid node for this measurement")
    return tuple(int(i) for i in idx)


def cancellation_residual(f: Density, v, params: KernelParams,
                          quad: HyperplaneQuadrature = HyperplaneQuadrature(),
                          eps_pv: float = None, btilde=None,
                          kmatrix: np.ndarray = None, patch: bool = True,
                          far_field: bool = True):
    """Principal-value integral of K(v, v') - K(v', v) against the reference
    c_b (f * |.|^gamma)(v).  Returns (lhs, rhs, rel_err).

    The lattice sum covers |v'-v| >= eps_pv with antipodally paired nodes;
    the cells of the excluded nodes are handled by the graded polar patch,
    which carries the surviving O(eps^{2-2s}) content of the cancellation,
    and the plane beyond the node cells by the graded far-field rule, which
    carries the O(R^{-2s}) forward-kernel tail.
    """
    from .collision import cb_constant  # late import, collision builds on us

    grid = f.grid
    if eps_pv is None:
        eps_pv = 2.0 * grid.h
    center = _node_index(grid, v)
    flat_center = np.ravel_multi_index(center, grid.shape())
    pts = grid.points()
    vv = pts[flat_center]
    dist = np.linalg.norm(pts - vv[None, :], axis=1)
    outside = dist >= eps_pv
    if kmatrix is not None:
        forward = kmatrix[flat_center]
        backward = kmatrix[:, flat_center]
        diff = forward - backward
    else:
        sel = np.where(outside)[0]
        diff = np.zeros(len(pts))
        base = np.broadcast_to(vv, (len(sel), grid.d))
        diff[sel] = (kernel_eval_many(f, base, pts[sel], params, quad, btilde)
                     - kernel_eval_many(f, pts[sel], base, params, quad, btilde))
    lhs = float(np.sum(diff[outside]) * grid.cell)
    if patch:
        def g(vp):
            base = np.broadcast_to(vv, vp.shape)
            return (kernel_eval_many(f, base, vp, params, quad, btilde)
                    - kernel_eval_many(f, vp, base, params, quad, btilde))

        lhs += polar_pv_patch(g, vv, eps_pv, grid, float(params.s))
    if far_field:
        lhs += far_field_difference(f, vv, params, quad, btilde)
    cb = cb_constant(params, btilde=btilde)
    rhs = cb * float(convolve_gamma(f, float(params.gamma)).values[center])
    if rhs == 0:
        raise ValueError("reference side vanishes; cancellation ratio undefined")
    return lhs, rhs, abs(lhs - rhs) / abs(rhs)


def upper_bound_profile(f: Density, v, radii, params: KernelParams,
                        quad: HyperplaneQuadrature = HyperplaneQuadrature(),
                        btilde=None, n_r: int = 12, n_dirs: int = 16):
    """I(r) = int_{B_r(v)} K_f(v, v') |v'-v|^2 dv' on a list of radii.

    Returns a dict with the fitted log-log slope (expected near 2-2s), the
    empirical Lambda0 = max I(r) / (<v>^{gamma+2s} r^{2-2s}), and the raw
    profile.  Degenerate profiles (all zero) are reported with slope None.
    """
    radii = sorted(float(r) for r in radii)
    if len(radii) < 3:
        raise ValueError("need at least 3 radii to fit a slope")
    v = np.asarray(v, dtype=float)
    d = f.grid.d
    s = float(params.s)
    g = float(params.gamma)
    if d == 2:
        ang = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        sphere = 2.0 * np.pi
    else:
        azi = 2.0 * np.pi * np.arange(8) / 8.0
        pol = np.arccos(np.linspace(-1 + 1.0 / 4, 1 - 1.0 / 4, 4))
        aa, pp = np.meshgrid(azi, pol, indexing="ij")
        dirs = np.stack([np.sin(pp) * np.cos(aa),
                         np.sin(pp) * np.sin(aa),
                         np.cos(pp)], axis=-1).reshape(-1, 3)
        sphere = 4.0 * np.pi
    w_ang = sphere / len(dirs)
    values = []
    for r in radii:
        u_edges = np.linspace(0.0, r ** (2.0 - 2.0 * s), n_r + 1)
        u_mid = 0.5 * (u_edges[:-1] + u_edges[1:])
        du = np.diff(u_edges)
        rho = u_mid ** (1.0 / (2.0 - 2.0 * s))
        # rho^{d-1} drho = rho^{d-2+2s} du/(2-2s); the extra rho^2 is the
        # squared-distance weight of the profile integrand
        w_rad = rho ** (d - 2.0 + 2.0 * s) * du / (2.0 - 2.0 * s) * rho ** 2
        pts = v[None, None, :] + rho[:, None, None] * dirs[None, :, :]
        base = np.broadcast_to(v, (pts.shape[0] * pts.shape[1], d))
        kv = kernel_eval_many(f, base, pts.reshape(-1, d), params, quad, btilde)
        kv = kv.reshape(len(rho), len(dirs))
        values.append(float(np.sum(kv * w_rad[:, None]) * w_ang))
    values = np.array(values)
    bracket = math.sqrt(1.0 + float(np.sum(v ** 2)))
    if np.all(values <= 0):
        return {"slope": None, "Lambda0": 0.0, "profile": dict(zip(radii, values)),
                "degenerate": True}
    logs = np.polyfit(np.log(radii), np.log(values), 1)
    lam = float(np.max(values / (bracket ** (g + 2.0 * s) * np.array(radii) ** (2.0 - 2.0 * s))))
    return {"slope": float(logs[0]), "Lambda0": lam,
            "profile": dict(zip(radii, values)), "degenerate": False}


def cone_estimate(f: Density, v, level: float, params: KernelParams,
                  quad: HyperplaneQuadrature = HyperplaneQuadrature(),
                  btilde=None, n_dirs: int = 64, n_radii: int = 5):
    """Angular scan for the empirical cone of non-degeneracy.

    A direction sigma counts as inside the cone when K_f(v, v + r sigma)
    clears level * <v>^{gamma+2s+1} r^{-(d+2s)} for every sampled r in [2, 3].
    Returns (cone_measure, lambda0, c0) where c0 = measure * <v> and lambda0
    is the largest level the same angular mass sustains.
    """
    v = np.asarray(v, dtype=float)
    d = f.grid.d
    g = float(params.gamma)
    s = float(params.s)
    if d == 2:
        ang = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        sphere = 2.0 * np.pi
    else:
        rng = np.random.default_rng(0)  # fixed scan directions
        raw = rng.normal(size=(n_dirs, 3))
        dirs = raw / np.linalg.norm(raw, axis=1, keepdims=True)
        sphere = 4.0 * np.pi
    radii = np.linspace(2.0, 3.0, n_radii)
    bracket = math.sqrt(1.0 + float(np.sum(v ** 2)))
    pts = v[None, None, :] + radii[:, None, None] * dirs[None, :, :]
    base = np.broadcast_to(v, (pts.shape[0] * pts.shape[1], d))
    kv = kernel_eval_many(f, base, pts.reshape(-1, d), params, quad, btilde)
    kv = kv.reshape(len(radii), len(dirs))
    ref = bracket ** (g + 2.0 * s + 1.0) * radii ** (-(d + 2.0 * s))
    per_dir_level = np.min(kv / ref[:, None], axis=0)
    inside = per_dir_level >= level
    count = int(np.sum(inside))
    measure = sphere * count / n_dirs
    if count == 0:
        return 0.0, 0.0, 0.0
    lambda0 = float(np.sort(per_dir_level)[::-1][count - 1])
    c0 = measure * bracket
    return measure, lambda0, c0
