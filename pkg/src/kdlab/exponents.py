"""Closed-form exponent calculus for the moderately soft / mildly hard window.

Every quantity here is elementary arithmetic in (d, gamma, s) and the decay
exponent q.  All functions run unchanged on floats and on
``fractions.Fraction`` inputs; the rational lane is the authoritative one and
the float lane is what gets reported, so tests compare the two.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any

from .reports import InequalityReport

Number = Any  # int, float or Fraction; formulas are field-agnostic

__all__ = [
    "KernelParams",
    "HydroBounds",
    "DerivedExponents",
    "InterpExponents",
    "derive_base",
    "moment_exponent_lq",
    "interp_general",
    "interp_second",
    "interp_weighted_q0",
    "interp_exponents",
    "algebra_check",
    "tedious_checks",
    "absorption_constant",
    "exact_params",
]


@dataclass(frozen=True)
class KernelParams:
    """Collision-kernel parameters with the standing window baked in.

    The angular factor is only known between two positive bounds, so the pair
    (btilde_lo, btilde_hi) travels with the dimension, the velocity power
    gamma and the singularity order s.
    """

    d: int
    gamma: Number
    s: Number
    btilde_lo: Number = 1
    btilde_hi: Number = 1

    def __post_init__(self) -> None:
        if self.d not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.d}")
        if not (0 < self.s < 1):
            raise ValueError(f"s must lie in (0,1), got {self.s}")
        if not (-self.d < self.gamma <= 1):
            raise ValueError(f"gamma must lie in (-d, 1], got {self.gamma}")
        w = self.gamma + 2 * self.s
        if not (0 < w < 1):
            raise ValueError(f"gamma + 2s must lie in (0,1), got {w}")
        if not (0 < self.btilde_lo <= self.btilde_hi):
            raise ValueError("angular bounds must satisfy 0 < lo <= hi")

    @property
    def window(self) -> Number:
        return self.gamma + 2 * self.s


@dataclass(frozen=True)
class HydroBounds:
    """Mass, energy and entropy control assumed along the whole evolution."""

    m0: Number
    M0: Number
    E0: Number
    H0: Number

    def __post_init__(self) -> None:
        if not (0 < self.m0 <= self.M0):
            raise ValueError("need 0 < m0 <= M0")
        if not self.E0 > 0:
            raise ValueError("need E0 > 0")
        if self.H0 < 0:
            raise ValueError("need H0 >= 0")


@dataclass(frozen=True)
class DerivedExponents:
    p0: Number
    q0: Number
    k0: Number
    k0star: Number
    qnsl: Number


@dataclass(frozen=True)
class InterpExponents:
    """Exponent family used by the layered moment interpolation.

    theta, beta, betap and the three gammas are the pairing exponents of the
    soft-potential absorption step; m1, m3, m4 are its weights (m3 is chosen
    so that feeding it back through the second moment estimate returns
    exactly m2 = l_q).  alpha0 is the plain moment-interpolation exponent of
    the weighted L^{q0} chain, (alpha1, alpha2) the general-estimate pair at
    p1 = q0, (alpha3, alpha4) the second-estimate pair, and (alpha5, alpha6)
    the exponents of E0 and of the margin in the absorption constant
    C(eps) = E0^alpha5 * eps^(-alpha6); alpha5 collapses to 1 exactly.
    """

    theta: Number
    beta: Number
    betap: Number
    gamma1: Number
    gamma2: Number
    gamma3: Number
    m1: Number
    m2: Number
    m3: Number
    m4: Number
    alpha0: Number
    alpha1: Number
    alpha2: Number
    alpha3: Number
    alpha4: Number
    alpha5: Number
    alpha6: Number


def exact_params(d: int, gamma: str | Number, s: str | Number,
                 btilde_lo: str | Number = 1,
                 btilde_hi: str | Number = 1) -> KernelParams:
    """Build KernelParams on the exact rational lane.

    Strings are parsed as decimal literals, which keeps 0.45 equal to 9/20
    instead of its binary rounding.
    """
    as_frac = lambda x: x if isinstance(x, Fraction) else Fraction(str(x))
    return KernelParams(d, as_frac(gamma), as_frac(s),
                        as_frac(btilde_lo), as_frac(btilde_hi))


def derive_base(params: KernelParams) -> DerivedExponents:
    """Derive the five base exponents from (d, gamma, s).

    q0 = 1 + 2s/d is the convexity exponent, p0 its dual integrability
    1/p0 = 1 - 2s/d, k0 the entropy-production moment weight, k0star the
    weight showing up in the production lower bound, and qnsl the first
    decay exponent reachable in one pass (two-branch formula, the very soft
    branch being calibrated so that l_{qnsl} = -(d-1)).
    """
    d, g, s = params.d, params.gamma, params.s
    two_s_over_d = 2 * s / d
    q0 = 1 + two_s_over_d
    p0 = 1 / (1 - two_s_over_d)
    k0 = (g + 2 * s) - two_s_over_d
    k0star = (2 * s + d * (g + 2 * s)) / (d + 2 * s)
    branch_pt = -2 * s * d / (d + 2 * s)
    if g >= branch_pt:
        qnsl = d + 1 + (d / (2 * s)) * min(g, 0 * g)
    else:
        qnsl = d + 1 - (d / (d + 2 * s)) * (2 - g)
    return DerivedExponents(p0=p0, q0=q0, k0=k0, k0star=k0star, qnsl=qnsl)


def moment_exponent_lq(params: KernelParams, q: Number) -> Number:
    """Moment weight l_q attached to the decay exponent q (q >= 0)."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    d, g, s = params.d, params.gamma, params.s
    return (g + 2 * s) + 2 * s / d - q * (1 + 2 * s / d)


def interp_general(params: KernelParams, p1: Number, k1: Number):
    """General weighted L^{p1} interpolation exponents.

    Returns (alpha1, alpha2, m1) with alpha1/p0 + alpha2 = 1 exact.  Valid
    for p1 in [1, p0*q0].
    """
    d, s = params.d, params.s
    base = derive_base(params)
    if not (1 <= p1 <= base.p0 * base.q0):
        raise ValueError(f"p1 must lie in [1, p0*q0], got {p1}")
    alpha1 = d * (p1 - 1) / (4 * s)
    alpha2 = (d + 2 * s - p1 * (d - 2 * s)) / (4 * s)
    if alpha2 == 0:
        # pure strong-norm endpoint p1 = p0*q0; the weight is forced
        m1 = k1 * 0
    else:
        m1 = (k1 - alpha1 * base.k0) / alpha2
    return alpha1, alpha2, m1


def interp_second(params: KernelParams, k2: Number) -> Number:
    """Weight m2 of the second moment estimate at target weight k2."""
    d, s = params.d, params.s
    k0 = derive_base(params).k0
    denom = 4 * s * s + d * d
    return (denom / (4 * s * d)) * (k2 - d * (d - 2 * s) * k0 / denom)


def interp_weighted_q0(params: KernelParams, k3: Number) -> Number:
    """Weight m3 of the weighted L^{q0} absorption estimate at weight k3."""
    d, s = params.d, params.s
    k0 = derive_base(params).k0
    return (1 + d / (2 * s)) * k3 - (d / (2 * s)) * k0 - 2


def absorption_constant(params: KernelParams, eps: Number, E0: Number) -> Number:
    """Constant C(eps) = E0 * eps^(-d/2s) absorbing the strong norm.

    This is the explicit form of the constant produced when the weighted
    L^{q0} estimate is split with margin eps via Young's inequality.
    """
    if eps <= 0:
        raise ValueError("margin must be positive")
    d, s = params.d, params.s
    return E0 * float(eps) ** (-float(d) / float(2 * s))


def interp_exponents(params: KernelParams, q: Number) -> InterpExponents:
    """Assemble the full interpolation-exponent family at decay exponent q."""
    d, g, s = params.d, params.gamma, params.s
    base = derive_base(params)
    k0, q0 = base.k0, base.q0
    l1 = min(2 + 0 * q, q)
    lq = moment_exponent_lq(params, q)

    theta = (d + 2 * s) / (d - 2 * s)
    inv_beta = (d * d + 4 * s * s) / (d + 2 * s) ** 2
    inv_betap = 4 * s * d / (d + 2 * s) ** 2
    beta = 1 / inv_beta
    betap = 1 / inv_betap
    gamma1 = 8 * s * s * (d + g) / (d * (4 * s * d + g * (d + 2 * s)))
    gamma2 = inv_beta * (d - 2 * s) * (d + 2 * s) / (d * d + 4 * s * s)
    gamma3 = inv_beta * 4 * s * (d + 2 * s) / (d * d + 4 * s * s)

    pole = 4 * s * d + g * (d + 2 * s)
    m1 = -4 * s * d * d * l1 / ((d + 2 * s) * pole) + g * d * k0 / pole
    m3 = (4 * s * d * lq + d * (d - 2 * s) * k0) / (d * d + 4 * s * s)
    m4 = (-8 * s * d - (2 * s - g) * d * k0) / ((d + 2 * s) * (g + 2 * s))

    alpha0 = 4 * s * d / (d + 2 * s) ** 2
    alpha1, alpha2, _ = interp_general(params, q0, k0 * 0)
    denom = 4 * s * s + d * d
    alpha3 = d * (d - 2 * s) / denom
    alpha4 = 4 * s * d / denom
    theta_y = (d + 2 * s) / d  # Young pairing of the absorption split
    alpha5 = alpha2 * alpha0 * theta_y / (theta_y - 1)
    alpha6 = 1 / (theta_y - 1)

    return InterpExponents(theta=theta, beta=beta, betap=betap,
                           gamma1=gamma1, gamma2=gamma2, gamma3=gamma3,
                           m1=m1, m2=lq, m3=m3, m4=m4,
                           alpha0=alpha0, alpha1=alpha1, alpha2=alpha2,
                           alpha3=alpha3, alpha4=alpha4,
                           alpha5=alpha5, alpha6=alpha6)


def _is_exact(*values: Number) -> bool:
    return all(isinstance(v, (int, Fraction)) for v in values)


def algebra_check(params: KernelParams, q: Number) -> InequalityReport:
    """Verify the exponent identities and weight inequalities at (params, q).

    The four identities must vanish exactly on the rational lane (and to
    1e-12 on the float lane); the three inequalities are reported with
    signed slacks, nonnegative meaning satisfied.  Out-of-window parameters
    are reported as inapplicable rather than raised.
    """
    d, g, s = params.d, params.gamma, params.s
    k0 = derive_base(params).k0
    window_ok = (-2 * s < g < 0) and (1 <= q <= 2 + (d / (2 * s)) * k0)
    if not window_ok:
        return InequalityReport(
            name="aux-moment-algebra", lhs=float("nan"), rhs=float("nan"),
            empirical_constant=None, verdict="inapplicable",
            probe=f"d={d} gamma={g} s={s} q={q}",
            notes={"reason": "needs gamma in (-2s,0) and 1 <= q <= 2 + d k0/(2s)"})

    e = interp_exponents(params, q)
    thetap = 1 / (1 - 1 / e.theta)
    residuals = {
        "beta-conjugacy": 1 / e.beta + 1 / e.betap - 1,
        "theta-conjugacy": 1 / e.theta + 1 / thetap - 1,
        "gamma2-pairing": e.gamma2 * e.theta - 1,
        "gamma3-pairing": e.gamma3 * thetap - 1,
    }
    budget = 2 / e.betap + e.m3 / e.beta
    slacks = {
        "gamma1-strict": (1 + 2 * s / d) - e.gamma1 * thetap,
        "weight-m1": budget - e.m1,
        "weight-m4": budget - e.m4,
    }
    tol = 0 if _is_exact(g, s, q) else 1e-12
    ok = all(abs(r) <= tol for r in residuals.values()) and \
        all(sl >= -tol for sl in slacks.values()) and slacks["gamma1-strict"] > 0
    worst_id = max(abs(r) for r in residuals.values())
    worst_slack = min(slacks.values())
    return InequalityReport(
        name="aux-moment-algebra", lhs=float(worst_id), rhs=float(worst_slack),
        empirical_constant=None, verdict="pass" if ok else "fail",
        probe=f"d={d} gamma={g} s={s} q={q}",
        notes={"identity_residuals": {k: float(v) for k, v in residuals.items()},
               "inequality_slacks": {k: float(v) for k, v in slacks.items()}})


def tedious_checks(params: KernelParams, q: Number) -> InequalityReport:
    """Check the two elementary weight comparisons behind the tail estimate.

    Branch one (any gamma < 0): q <= d+1 + d*gamma/(2s) forces
    -(q + k0) d/(d+gamma) <= l_q.  Branch two (very soft range only): with
    alpha0 = d/(d+2s) and m = -q + (d-1)(d+gamma)/d, the reduced weight
    (m - 2 alpha0)/(1 - alpha0) stays below gamma.
    """
    d, g, s = params.d, params.gamma, params.s
    if g >= 0:
        return InequalityReport(
            name="tedious-weights", lhs=float("nan"), rhs=float("nan"),
            empirical_constant=None, verdict="inapplicable",
            probe=f"d={d} gamma={g} s={s} q={q}",
            notes={"reason": "soft potentials only"})
    k0 = derive_base(params).k0
    lq = moment_exponent_lq(params, q)
    notes: dict = {}
    slack_one = None
    if q <= d + 1 + g * d / (2 * s):
        km = -(q + k0) * d / (d + g)
        slack_one = lq - km
        notes["moment-weight-slack"] = float(slack_one)
    else:
        notes["moment-weight-slack"] = "inapplicable (q too large)"

    branch_pt = -2 * s * d / (d + 2 * s)
    slack_two = None
    if g < branch_pt:
        if q >= d - 1 - 2 * s * (d - 2) / (d + 2 * s):
            alpha0 = d / (d + 2 * s)
            m = -q + (d - 1) * (d + g) / d
            reduced = (m - 2 * alpha0) / (1 - alpha0)
            slack_two = g - reduced
            notes["reduced-weight-slack"] = float(slack_two)
        else:
            notes["reduced-weight-slack"] = "inapplicable (q below range)"
    else:
        notes["reduced-weight-slack"] = "inapplicable (not very soft)"

    tol = 0 if _is_exact(g, s, q) else 1e-12
    evaluated = [sl for sl in (slack_one, slack_two) if sl is not None]
    if not evaluated:
        verdict = "inapplicable"
    else:
        verdict = "pass" if all(sl >= -tol for sl in evaluated) else "fail"
    worst = min(evaluated) if evaluated else float("nan")
    return InequalityReport(
        name="tedious-weights", lhs=float(worst), rhs=0.0,
        empirical_constant=None, verdict=verdict,
        probe=f"d={d} gamma={g} s={s} q={q}", notes=notes)
