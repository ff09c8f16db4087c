"""Closed-form EE-optimal power allocation for two-user clusters.

Two decoding orders are handled:

* **Case I**: the stronger user (index 0) is decoded first, the default SIC
  order everywhere else in the package.
* **Case II**: the weaker user (index 1) is decoded first, so it suffers the
  stronger user's interference.

For each order the instance falls into one of a few phases, decided by the
signs of the EE gradient at corner points of the power box.  Each phase has
an explicit solution, up to one scalar root that is found by bisection.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .cluster import LN2, ClusterInstance, EeSolution, _solution, ee_gradient, min_powers

#: bisection precision on powers (watts)
BISECTION_DELTA = 1e-12

CASE_I_ORDER = (0, 1)
CASE_II_ORDER = (1, 0)


class SicCase(enum.Enum):
    CASE_I = "CaseI"
    CASE_II = "CaseII"


class PhaseLabel(enum.IntEnum):
    I = 1
    II = 2
    III = 3
    IV = 4


@dataclass(frozen=True)
class Phase:
    case: SicCase
    phase: PhaseLabel

    def __post_init__(self):
        if self.case is SicCase.CASE_II and self.phase is PhaseLabel.IV:
            raise ValueError("Case II has no phase IV")

    def __str__(self) -> str:
        return f"{self.case.value}-{self.phase.name}"


class BracketError(ValueError):
    """The two ends of a bisection interval do not straddle a root."""


def bisect_root(f, lo: float, hi: float, delta: float = BISECTION_DELTA) -> float:
    """Root of a continuous scalar function on ``[lo, hi]`` by bisection.

    Takes at most ``ceil(log2((hi - lo) / delta))`` halvings, so the returned
    midpoint is within ``delta`` of a root.
    """
    if not hi >= lo:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if (flo > 0.0) == (fhi > 0.0):
        raise BracketError(f"f({lo}) = {flo} and f({hi}) = {fhi} have the same sign")
    steps = max(0, math.ceil(math.log2((hi - lo) / delta))) if hi > lo else 0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0:
            return mid
        if (fmid > 0.0) == (flo > 0.0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# gradient signs
# ---------------------------------------------------------------------------

def _gradient_sign(instance: ClusterInstance, user: int):
    """Function of the two powers with the sign of dEE/dP_user.

    Multiplying the gradient by ``(P_f + P_1 + P_2)**2`` leaves the sign
    intact and avoids dividing tiny numbers by each other.
    """
    h = instance.gains
    s2, pf = instance.noise_power, instance.circuit_power

    def sign(p1: float, p2: float) -> float:
        y = s2 + p1 * h[0] + p2 * h[1]
        return h[user] * (pf + p1 + p2) / (LN2 * y) - math.log2(y / s2)

    return sign


def _root_or_edge(g, lo: float, hi: float) -> float:
    """Maximiser on ``[lo, hi]`` of a function whose derivative has the sign of ``g``.

    ``g`` is non-increasing (pseudo-concave objective), so the answer is the
    root when there is one and the appropriate end point otherwise.
    """
    if hi <= lo:
        return lo
    if g(lo) <= 0.0:
        return lo
    if g(hi) >= 0.0:
        return hi
    return bisect_root(g, lo, hi)


def _two_user(instance: ClusterInstance) -> None:
    if instance.size != 2:
        raise ValueError(f"two-user solver needs a 2-user cluster, got {instance.size}")


@dataclass(frozen=True)
class CornerGradients:
    """EE gradients at the corner points used by the phase conditions."""

    d1_max_max: float
    d2_max_max: float
    d1_max_min: float
    d2_max_min: float


def corner_gradients(instance: ClusterInstance, p2_low: float | None = None) -> CornerGradients:
    """Gradients at ``(P1max, P2max)`` and at ``(P1max, p2_low)``.

    ``p2_low`` defaults to user 2's interference-free minimum power.
    """
    _two_user(instance)
    p1max, p2max = instance.max_powers
    if p2_low is None:
        p2_low = (2.0 ** instance.min_rates[1] - 1.0) * instance.noise_power / instance.gains[1]
    top = ee_gradient(instance, [p1max, p2max])
    low = ee_gradient(instance, [p1max, p2_low])
    return CornerGradients(float(top[0]), float(top[1]), float(low[0]), float(low[1]))


# ---------------------------------------------------------------------------
# Case I: stronger user decoded first
# ---------------------------------------------------------------------------

def case1_matching_phases(instance: ClusterInstance) -> list[PhaseLabel]:
    """Every Case I phase whose condition holds (boundary ties can match two)."""
    g = corner_gradients(instance)
    found = []
    if g.d1_max_max >= g.d2_max_max >= 0.0:
        found.append(PhaseLabel.I)
    if g.d1_max_max >= 0.0 and g.d2_max_max <= 0.0 and g.d1_max_min >= 0.0:
        found.append(PhaseLabel.II)
    if g.d1_max_max <= 0.0 and g.d2_max_max <= 0.0 and g.d1_max_min >= 0.0:
        found.append(PhaseLabel.III)
    if g.d1_max_min <= 0.0 and g.d2_max_min <= 0.0:
        found.append(PhaseLabel.IV)
    return found


def classify_phase_case1(instance: ClusterInstance) -> Phase:
    """Case I phase; at a tie the lower-numbered phase wins."""
    _two_user(instance)
    if not min_powers(instance, CASE_I_ORDER).feasible:
        raise ValueError("instance is infeasible under Case I decoding")
    found = case1_matching_phases(instance)
    if not found:
        raise RuntimeError(f"no Case I phase matches {corner_gradients(instance)}")
    return Phase(SicCase.CASE_I, found[0])


def _case1_p2_cap(instance: ClusterInstance) -> float:
    """Largest P2 leaving user 1 its target rate when user 1 sends at full power."""
    h = instance.gains
    a1 = 2.0 ** instance.min_rates[0] - 1.0
    if a1 == 0.0:
        return math.inf
    return instance.max_powers[0] * h[0] / (a1 * h[1]) - instance.noise_power / h[1]


def solve_case1(instance: ClusterInstance) -> EeSolution:
    """EE-optimal powers with the stronger user decoded first."""
    _two_user(instance)
    report = min_powers(instance, CASE_I_ORDER)
    if not report.feasible:
        return EeSolution.infeasible(2, first_violation=report.first_violation)
    phase = classify_phase_case1(instance)
    p1max, p2max = (float(x) for x in instance.max_powers)
    s2, h = instance.noise_power, instance.gains
    p2min = (2.0 ** instance.min_rates[1] - 1.0) * s2 / h[1]
    cap = _case1_p2_cap(instance)
    if phase.phase is PhaseLabel.I:
        p1, p2 = p1max, min(p2max, cap)
    elif phase.phase is PhaseLabel.IV:
        g1 = _gradient_sign(instance, 0)
        p1 = max(_root_or_edge(lambda x: g1(x, p2min), 0.0, p1max), float(report.powers[0]))
        p2 = p2min
    else:
        g2 = _gradient_sign(instance, 1)
        p1 = p1max
        star = _root_or_edge(lambda x: g2(p1max, x), p2min, p2max)
        p2 = p2min if star <= p2min else min(star, cap)
    powers = np.clip([p1, p2], report.powers, instance.max_powers)
    return _solution(instance, powers, CASE_I_ORDER, feasible=True,
                     diagnostics={"phase": str(phase)})


# ---------------------------------------------------------------------------
# Case II: weaker user decoded first
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CaseIIGeometry:
    """Line along which the weaker user's QoS is tight: ``P1 = k * P2 + b``.

    ``k`` is infinite when that user has no rate target; the line then
    degenerates to ``P2 = 0``.
    """

    k: float
    b: float
    p1_bar_min: float

    @classmethod
    def of(cls, instance: ClusterInstance) -> "CaseIIGeometry":
        _two_user(instance)
        h, s2 = instance.gains, instance.noise_power
        a2 = 2.0 ** instance.min_rates[1] - 1.0
        k = h[1] / (a2 * h[0]) if a2 > 0.0 else math.inf
        p1_bar_min = (2.0 ** instance.min_rates[0] - 1.0) * s2 / h[0]
        return cls(float(k), float(-s2 / h[0]), float(p1_bar_min))

    def p1(self, p2: float) -> float:
        return self.k * p2 + self.b

    def p2(self, p1: float) -> float:
        return (p1 - self.b) / self.k if math.isfinite(self.k) else 0.0


def classify_phase_case2(instance: ClusterInstance) -> Phase:
    """Case II phase from the gradients at ``(P1max, P2max)``; ties go to the lower phase."""
    _two_user(instance)
    if not min_powers(instance, CASE_II_ORDER).feasible:
        raise ValueError("instance is infeasible under Case II decoding")
    g = corner_gradients(instance)
    if g.d2_max_max >= 0.0:
        label = PhaseLabel.I
    elif g.d1_max_max >= 0.0:
        label = PhaseLabel.II
    else:
        label = PhaseLabel.III
    return Phase(SicCase.CASE_II, label)


def _case2_line_sign(instance: ClusterInstance, geo: CaseIIGeometry):
    """Sign of the derivative of the EE along the tight line, as a function of P2."""
    h, s2, pf = instance.gains, instance.noise_power, instance.circuit_power
    slope_rx = geo.k * h[0] + h[1]
    slope_tx = geo.k + 1.0

    def sign(p2: float) -> float:
        y = s2 + geo.p1(p2) * h[0] + p2 * h[1]
        return slope_rx * (pf + geo.p1(p2) + p2) / (LN2 * y) - slope_tx * math.log2(y / s2)

    return sign


def solve_case2(instance: ClusterInstance) -> EeSolution:
    """EE-optimal powers with the weaker user decoded first."""
    _two_user(instance)
    report = min_powers(instance, CASE_II_ORDER)
    if not report.feasible:
        return EeSolution.infeasible(2, first_violation=report.first_violation)
    phase = classify_phase_case2(instance)
    geo = CaseIIGeometry.of(instance)
    p1max, p2max = (float(x) for x in instance.max_powers)
    diagnostics = {"phase": str(phase)}
    g2 = _gradient_sign(instance, 1)

    if phase.phase is PhaseLabel.I:
        p2 = p2max
        p1 = min(p1max, geo.p1(p2max))
    elif not math.isfinite(geo.k):
        # No rate target for the weaker user: the tight line is P2 = 0.
        g1 = _gradient_sign(instance, 0)
        star = _root_or_edge(lambda x: g1(x, 0.0), 0.0, p1max)
        if star >= p1max:
            p1, p2 = p1max, _root_or_edge(lambda x: g2(p1max, x), 0.0, p2max)
        else:
            p1, p2 = max(star, geo.p1_bar_min), 0.0
    else:
        line = _case2_line_sign(instance, geo)
        lo = geo.p2(geo.p1_bar_min)
        full = geo.p2(p1max)  # P2 at which the tight line reaches P1max
        hi = min(full, p2max)
        if full > p2max:
            diagnostics["line_clipped_by_p2max"] = True
        p2_star = _root_or_edge(line, lo, hi)
        # Branch on P2 rather than on k * P2 + b, which rounds at the ends.
        if p2_star <= lo:
            p1, p2 = geo.p1_bar_min, lo
        elif p2_star < hi or hi < full:
            p1, p2 = min(geo.p1(p2_star), p1max), p2_star
        else:
            p1 = p1max
            p2 = _root_or_edge(lambda x: g2(p1max, x), full, p2max)
        if phase.phase is PhaseLabel.III:
            # Both gradients already negative at the lowest P2 that full P1
            # permits: a regime the phase table does not list separately.
            if g2(p1max, full) <= 0.0 and _gradient_sign(instance, 0)(p1max, full) <= 0.0:
                diagnostics["beyond_phase_table"] = True
    powers = np.clip([p1, p2], report.powers, instance.max_powers)
    return _solution(instance, powers, CASE_II_ORDER, feasible=True, diagnostics=diagnostics)


def solve(instance: ClusterInstance, case: SicCase | str = SicCase.CASE_I) -> EeSolution:
    case = SicCase(case) if isinstance(case, str) else case
    return solve_case1(instance) if case is SicCase.CASE_I else solve_case2(instance)
