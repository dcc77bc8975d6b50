"""Decay barriers, the bootstrap schedule, the a*-condition ledger, and the
monotone-functional monitor.

The schedule arithmetic runs unchanged on floats and Fractions; feeding exact
rational parameters keeps every q_n, beta_n, delta_n exact, which is what the
tests pin.  Everything time-dependent here is closed-form; no ODE is
integrated, conditions are verified pointwise on a log-spaced time grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .convexity import m_kappa
from .exponents import (HydroBounds, KernelParams, absorption_constant,
                        derive_base)
from .reports import InequalityReport
from .vgrid import Density, GridSpec

__all__ = [
    "Barrier",
    "ScheduleStep",
    "DecaySchedule",
    "LedgerEntry",
    "ConditionLedger",
    "barrier_eval",
    "delta_star",
    "make_schedule",
    "condition_ledger",
    "ode_margins",
    "monitor",
    "pointwise_decay_check",
    "ratio_series",
    "crossing_bracket",
]


@dataclass(frozen=True)
class Barrier:
    """Time-space barrier A(t, v) = a_star (1 + t^{-beta}) <v>^{-q}."""

    q: float
    a_star: float
    beta: float

    def __post_init__(self):
        if self.q < 0:
            raise ValueError("q must be non-negative")
        if not self.a_star > 0:
            raise ValueError("a_star must be positive")
        if not self.beta > 1:
            raise ValueError("beta must exceed 1")

    def amplitude(self, t: float) -> float:
        if not t > 0:
            raise ValueError("barrier amplitude needs t > 0")
        return float(self.a_star) * (1.0 + float(t) ** (-float(self.beta)))

    def profile(self, t: float, grid: GridSpec) -> np.ndarray:
        """A(t, .) on the velocity lattice."""
        return self.amplitude(t) * grid.bracket() ** (-float(self.q))


def barrier_eval(b: Barrier, t: float, v) -> float:
    if not t > 0:
        raise ValueError("barrier is defined for t > 0")
    v = np.asarray(v, dtype=float)
    bracket = math.sqrt(1.0 + float(np.sum(v ** 2)))
    return b.amplitude(t) * bracket ** (-float(b.q))


# ---------------------------------------------------------------------------
# bootstrap schedule


@dataclass(frozen=True)
class ScheduleStep:
    n: int
    q: object
    beta: object
    delta: object
    branch: str
    conditions: tuple = ()


@dataclass(frozen=True)
class DecaySchedule:
    steps: tuple

    def __iter__(self):
        return iter(self.steps)

    def __len__(self):
        return len(self.steps)


def delta_star(params: KernelParams, qstar):
    """Per-step decay gain and the branch of the three-case table it used.

    The two capped branches agree at both seams (at q* = d they are the same
    min; at q* = d+1 both caps vanish); the uncapped 2s branch takes over
    only after a step has landed exactly on d+1, which the caps guarantee.
    """
    d, g, s = params.d, params.gamma, params.s
    two_s = 2 * s
    if qstar < d:
        return min(g + two_s - g * qstar / d, d + 1 - qstar), "below-d"
    if qstar < d + 1:
        return min(two_s, d + 1 - qstar), "between-d-and-d1"
    return two_s, "at-least-d1"


def make_schedule(params: KernelParams, q_target) -> DecaySchedule:
    """Iterate the decay exponent from q_nsl up to q_target.

    Every step multiplies beta by (1+2s)/(2s) exactly; the first step starts
    at (q_nsl, d/2s).  Stops at the first q_n >= q_target.
    """
    base = derive_base(params)
    if q_target < base.qnsl:
        raise ValueError("q_target %r is below the single-pass exponent %r"
                         % (q_target, base.qnsl))
    d, s = params.d, params.s
    ratio = (1 + 2 * s) / (2 * s)
    q = base.qnsl
    beta = d / (2 * s)
    steps = []
    n = 0
    while True:
        delta, branch = delta_star(params, q)
        steps.append(ScheduleStep(n=n, q=q, beta=beta, delta=delta,
                                  branch=branch))
        if q >= q_target:
            break
        q = q + delta
        beta = ratio * beta
        n += 1
    return DecaySchedule(tuple(steps))


# ---------------------------------------------------------------------------
# a_star condition ledger


@dataclass(frozen=True)
class LedgerEntry:
    name: str
    bound: float
    provenance: str


@dataclass(frozen=True)
class ConditionLedger:
    entries: tuple
    a_star: float
    binding: str
    c_bar: float
    C_bar: float
    ode: dict

    def bound(self, name: str) -> float:
        for e in self.entries:
            if e.name == name:
                return e.bound
        raise KeyError(name)


def ode_margins(a_star: float, beta: float, c_bar: float,
                params: KernelParams, times: np.ndarray) -> np.ndarray:
    """Pointwise value of 1 + a(t) - a'(t) - c_bar a(t)^{1+2s/d}.

    Non-positive everywhere means the amplitude a(t) = a_star (1 + t^{-beta})
    is an admissible supersolution on the sampled window.
    """
    t = np.asarray(times, dtype=float)
    power = 1.0 + 2.0 * float(params.s) / float(params.d)
    amp = a_star * (1.0 + t ** (-beta))
    damp = -a_star * beta * t ** (-beta - 1.0)
    return 1.0 + amp - damp - c_bar * amp ** power


def _ode_minimal_a(beta: float, c_bar: float, params: KernelParams,
                   times: np.ndarray) -> float:
    def worst(a):
        return float(np.max(ode_margins(a, beta, c_bar, params, times)))

    lo, hi = 1e-6, 1.0
    for _ in range(80):
        if worst(hi) <= 0.0:
            break
        hi *= 4.0
        if hi > 1e15:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if worst(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def condition_ledger(step: ScheduleStep, hydro: HydroBounds, measured,
                     Cb: float, params: KernelParams, safety: float = 4.0,
                     n_times: int = 200, t_window=(1e-3, 1e3)) -> ConditionLedger:
    """Collect every lower bound on a_star the step's barrier must clear.

    Explicit formulas are evaluated as written; bounds that chain through
    constants the analysis leaves implicit use the measured values times the
    safety factor and say so in their provenance.  The pointwise supersolution
    condition is turned into a bound by bisection on the same time grid it is
    later verified on.
    """
    d = params.d
    g = float(params.gamma)
    s = float(params.s)
    base = derive_base(params)
    q0 = float(base.q0)
    M0 = float(hydro.M0)
    E0 = float(hydro.E0)

    missing = [name for name in ("c0", "good_extra", "coercivity")
               if getattr(measured, name, None) in (None, 0.0)]
    # zero is a legitimate magnitude for the velocity error constant
    if getattr(measured, "velocity_error", None) is None:
        missing.append("velocity_error")
    if g >= 0 and getattr(measured, "hard_error", None) is None:
        missing.append("hard_error")
    if missing:
        raise ValueError("missing measured constants: " + ", ".join(missing))

    entries = [
        LedgerEntry("good-extra-threshold",
                    2.0 ** (d + 1) * (M0 + E0) / float(measured.c0),
                    "explicit formula on the measured cone constant"),
        LedgerEntry("boundary-datum", float(Cb),
                    "inflow ceiling passthrough"),
    ]

    C_get = float(measured.good_extra)
    C_cor = float(measured.coercivity)
    C_one = float(measured.velocity_error)
    if g >= 0:
        C_hardc = float(measured.hard_error)
        eps = 0.5 * C_cor
        C_eps = absorption_constant(params, eps, E0)
        C_bar = max(C_cor + C_hardc * C_eps, C_one + C_hardc, 1.0)
        c_bar = C_get / C_bar
    else:
        # soft lane: the truncation-independent pieces leave a C_cor-sized
        # constant term, a C_one-sized linear term, and a sixteenth of the
        # good extra term
        C_bar = max(C_cor, C_one, 1.0)
        c_bar = (C_get / 16.0) / C_bar
        from .collision import cb_constant
        cb = cb_constant(params)
        qn = float(step.q)
        omega = 2.0 * math.pi if d == 2 else 4.0 * math.pi
        c_q3 = omega * (2.0 * math.sqrt(2.0)) ** qn / (d + g)
        entries.append(LedgerEntry(
            "convolution-window", 2.0 ** d * M0 / c_q3,
            "explicit formula"))
        entries.append(LedgerEntry(
            "soft-error-floor",
            safety * max((2.0 / C_get) ** (d / (g + 2.0 * s)),
                         (8.0 * q0 * cb * M0 / C_get) ** (d / (2.0 * s))),
            "measured-constant with safety factor"))

    vget = getattr(measured, "very_good_extra", None)
    if step.n >= 1 and vget:
        beta_prev = float(step.beta) * (2.0 * s) / (1.0 + 2.0 * s)
        entries.append(LedgerEntry(
            "iteration-margin",
            safety * (4.0 * (1.0 + 2.0 * s) * beta_prev
                      / (2.0 * s * float(vget))) ** (1.0 / (2.0 * s)),
            "measured-constant with safety factor"))

    times = np.logspace(math.log10(t_window[0]), math.log10(t_window[1]),
                        n_times)
    beta = float(step.beta)
    a_ode = _ode_minimal_a(beta, c_bar, params, times)
    entries.append(LedgerEntry("pointwise-ode", a_ode,
                               "bisection on the sampled supersolution "
                               "condition"))

    best = max(entries, key=lambda e: e.bound)
    a_star = best.bound
    margins = ode_margins(a_star, beta, c_bar, params, times)
    ode = {
        "beta": beta,
        "c_bar": c_bar,
        "times": (float(times[0]), float(times[-1]), len(times)),
        "max_margin": float(np.max(margins)),
        "ok": bool(np.max(margins) <= 0.0),
    }
    return ConditionLedger(entries=tuple(entries), a_star=a_star,
                           binding=best.name, c_bar=c_bar, C_bar=C_bar,
                           ode=ode)


# ---------------------------------------------------------------------------
# trajectory monitors


def _as_pairs(trajectory) -> list:
    if hasattr(trajectory, "times") and hasattr(trajectory, "states"):
        return list(zip(trajectory.times, trajectory.states))
    return [(float(t), payload) for t, payload in trajectory]


def _payload_values(payload) -> np.ndarray:
    vals = payload.values
    grid = payload.grid
    return vals.reshape((-1,) + grid.shape()), grid


def monitor(trajectory, barrier: Barrier, kappa: float, params: KernelParams,
            shift_t1: float = None, slack_factor: float = 1e-6):
    """m_kappa along the stored times plus the shifted-barrier variant.

    Returns (series, report).  The verdict is pass iff consecutive values
    never increase by more than slack_factor * m(t0); the same check runs
    against the barrier restarted at t1 (snapshots at or before t1 are
    skipped there).
    """
    pairs = _as_pairs(trajectory)
    if not pairs:
        raise ValueError("empty trajectory")
    series = np.array([m_kappa(payload, barrier, t, kappa, params)
                       for t, payload in pairs])
    slack = slack_factor * series[0]
    worst = float(np.max(np.diff(series))) if len(series) > 1 else 0.0
    verdict = "pass" if worst <= slack else "fail"

    if shift_t1 is None:
        shift_t1 = pairs[0][0]
    shifted = [(t, payload) for t, payload in pairs if t > shift_t1]
    notes = {"shift_t1": shift_t1, "n_times": len(pairs)}
    if len(shifted) >= 2:
        sseries = np.array([m_kappa(payload, barrier, t - shift_t1, kappa,
                                    params) for t, payload in shifted])
        sworst = float(np.max(np.diff(sseries)))
        sslack = slack_factor * sseries[0]
        notes["shifted_worst_increase"] = sworst
        notes["shifted_verdict"] = "pass" if sworst <= sslack else "fail"
    else:
        notes["shifted_verdict"] = "skipped"
    report = InequalityReport(name="barrier-monitor", lhs=worst, rhs=slack,
                              empirical_constant=None, verdict=verdict,
                              probe="trajectory[%d]" % len(pairs),
                              notes=notes)
    return series, report


def ratio_series(trajectory, barrier: Barrier):
    """Per stored time, the maximum of f / A over every node (and cell)."""
    pairs = _as_pairs(trajectory)
    if not pairs:
        raise ValueError("empty trajectory")
    times = np.array([t for t, _ in pairs])
    ratios = []
    for t, payload in pairs:
        vals, grid = _payload_values(payload)
        prof = barrier.profile(t, grid)
        ratios.append(float(np.max(vals / prof[None])))
    return times, np.array(ratios)


def pointwise_decay_check(trajectory, barrier: Barrier, t0: float,
                          tol: float = 1e-3):
    """Max of f/A over stored times >= t0; pass iff it stays within 1 + tol."""
    times, ratios = ratio_series(trajectory, barrier)
    keep = times >= t0
    if not np.any(keep):
        raise ValueError("t0 = %r is beyond the stored trajectory" % (t0,))
    max_ratio = float(np.max(ratios[keep]))
    return max_ratio, ("pass" if max_ratio <= 1.0 + tol else "fail")


def crossing_bracket(coarse: Barrier, fine: Barrier, t: float) -> float:
    """<v> beyond which the higher-q barrier sits below the lower-q one."""
    if fine.q <= coarse.q:
        raise ValueError("fine barrier must decay strictly faster")
    return (fine.amplitude(t) / coarse.amplitude(t)) ** (
        1.0 / (float(fine.q) - float(coarse.q)))
