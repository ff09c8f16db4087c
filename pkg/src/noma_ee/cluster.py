"""Single-RB (cluster) power allocation for uplink NOMA.

Users inside a cluster are indexed by decreasing channel gain and the base
station decodes them in that order, so user ``l`` sees interference only
from users ``k > l``.  Everything here works on one cluster; the system-level
association lives in :mod:`noma_ee.matching`.

Internally the solvers work with received powers ``q_l = P_l |h_l|^2``,
which turns every QoS constraint into a linear inequality::

    q_l >= a_l * (sum_{k>l} q_k + sigma2),   a_l = 2**R_l^min - 1
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

LN2 = math.log(2.0)

#: Dinkelbach stopping threshold on the subtractive objective (bits).
DINKELBACH_EPS = 1e-8
#: Inner sweep stops once no power moved by more than this (watts).
INNER_TOL = 1e-9
MAX_OUTER = 100
MAX_SWEEPS = 10_000

# relative slack under which an earlier user's QoS counts as active
_TIGHT_RTOL = 1e-10


class InfeasibleError(ValueError):
    """Raised when a solver that requires a feasible cluster gets one that is not."""


@dataclass(frozen=True)
class ClusterInstance:
    """Users sharing one resource block.

    Parameters
    ----------
    gains : array_like
        Linear channel power gains ``|h_l|^2``, non-increasing.
    min_rates : array_like
        Minimum rates in bit/s/Hz.
    max_powers : array_like
        Per-user transmit power caps in watts.
    circuit_power : float
        Fixed circuit power of the whole cluster in watts.
    noise_power : float
        Noise power ``sigma^2`` in watts.
    """

    gains: np.ndarray
    min_rates: np.ndarray
    max_powers: np.ndarray
    circuit_power: float
    noise_power: float

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float).ravel()
        min_rates = np.broadcast_to(np.asarray(self.min_rates, dtype=float), gains.shape).copy()
        max_powers = np.broadcast_to(np.asarray(self.max_powers, dtype=float), gains.shape).copy()
        if gains.size == 0:
            raise ValueError("a cluster needs at least one user")
        if np.any(gains <= 0):
            raise ValueError("channel gains must be strictly positive")
        if np.any(np.diff(gains) > 0):
            raise ValueError("channel gains must be sorted in non-increasing order")
        if np.any(min_rates < 0):
            raise ValueError("minimum rates must be non-negative")
        if np.any(max_powers <= 0):
            raise ValueError("maximum powers must be positive")
        if self.noise_power <= 0:
            raise ValueError("noise power must be positive")
        if self.circuit_power < 0:
            raise ValueError("circuit power must be non-negative")
        for arr in (gains, min_rates, max_powers):
            arr.flags.writeable = False
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "min_rates", min_rates)
        object.__setattr__(self, "max_powers", max_powers)
        object.__setattr__(self, "circuit_power", float(self.circuit_power))
        object.__setattr__(self, "noise_power", float(self.noise_power))

    @property
    def size(self) -> int:
        return int(self.gains.size)

    def with_max_powers(self, max_powers) -> "ClusterInstance":
        return ClusterInstance(self.gains, self.min_rates, max_powers,
                               self.circuit_power, self.noise_power)

    def to_dict(self) -> dict:
        return {
            "gains": self.gains.tolist(),
            "min_rates": self.min_rates.tolist(),
            "max_powers": self.max_powers.tolist(),
            "circuit_power": self.circuit_power,
            "noise_power": self.noise_power,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterInstance":
        return cls(np.asarray(d["gains"], dtype=float),
                   np.asarray(d["min_rates"], dtype=float),
                   np.asarray(d["max_powers"], dtype=float),
                   float(d["circuit_power"]), float(d["noise_power"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ClusterInstance":
        return cls.from_dict(json.loads(text))


@dataclass
class EeSolution:
    """Power allocation of one cluster and the quantities derived from it."""

    powers: np.ndarray
    rates: np.ndarray
    sum_rate: float
    total_power: float
    ee: float
    dinkelbach_iterations: int = 0
    inner_iterations: int = 0
    feasible: bool = True
    diagnostics: dict = field(default_factory=dict)

    CSV_FIELDS = ("feasible", "ee", "sum_rate", "total_power_w",
                  "dinkelbach_iterations", "inner_iterations")

    @classmethod
    def infeasible(cls, size: int, **diagnostics) -> "EeSolution":
        return cls(np.zeros(size), np.zeros(size), 0.0, 0.0, 0.0,
                   feasible=False, diagnostics=diagnostics)

    def csv_header(self, num_users: int | None = None) -> list[str]:
        n = self.powers.size if num_users is None else num_users
        return list(self.CSV_FIELDS) + [f"p_{i + 1}" for i in range(n)]

    def csv_row(self, num_users: int | None = None) -> list:
        n = self.powers.size if num_users is None else num_users
        powers = list(self.powers) + [""] * (n - self.powers.size)
        return [int(self.feasible), self.ee, self.sum_rate, self.total_power,
                self.dinkelbach_iterations, self.inner_iterations] + powers


# ---------------------------------------------------------------------------
# decode-order handling
# ---------------------------------------------------------------------------

def _resolve_order(instance: ClusterInstance, order) -> np.ndarray:
    n = instance.size
    if order is None:
        return np.arange(n)
    order = np.asarray(order, dtype=int)
    if sorted(order.tolist()) != list(range(n)):
        raise ValueError(f"order must be a permutation of 0..{n - 1}, got {order.tolist()}")
    return order


def _check_powers(instance: ClusterInstance, powers) -> np.ndarray:
    powers = np.asarray(powers, dtype=float)
    if powers.shape != instance.gains.shape:
        raise ValueError(f"expected {instance.size} powers, got shape {powers.shape}")
    if np.any(powers < 0):
        raise ValueError("powers must be non-negative")
    return powers


# ---------------------------------------------------------------------------
# rates and objective
# ---------------------------------------------------------------------------

def per_user_rates(instance: ClusterInstance, powers, order=None) -> np.ndarray:
    """Per-user rates under SIC.

    ``order`` lists user indices in decoding order (first decoded first);
    by default users are decoded by decreasing gain.
    """
    powers = _check_powers(instance, powers)
    order = _resolve_order(instance, order)
    rx = powers[order] * instance.gains[order]
    # interference seen by the i-th decoded user: everything decoded after it
    tail = np.concatenate([np.cumsum(rx[::-1])[::-1][1:], [0.0]])
    rates = np.empty_like(rx)
    rates[order] = np.log2(1.0 + rx / (tail + instance.noise_power))
    return rates


def sum_rate(instance: ClusterInstance, powers) -> float:
    powers = _check_powers(instance, powers)
    return float(np.log2(1.0 + powers @ instance.gains / instance.noise_power))


def ee_value(instance: ClusterInstance, powers) -> float:
    """Energy efficiency (bit/s/Hz per watt) of a power vector."""
    powers = _check_powers(instance, powers)
    denom = instance.circuit_power + powers.sum()
    if denom <= 0:
        raise ZeroDivisionError("circuit plus transmit power must be positive")
    return sum_rate(instance, powers) / denom


def ee_gradient(instance: ClusterInstance, powers) -> np.ndarray:
    """Partial derivatives of the EE with respect to each user's power."""
    powers = _check_powers(instance, powers)
    s2 = instance.noise_power
    rx = s2 + powers @ instance.gains
    denom = instance.circuit_power + powers.sum()
    rate = np.log2(rx / s2)
    return instance.gains / (rx * denom * LN2) - rate / denom**2


# ---------------------------------------------------------------------------
# feasibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MinPowerReport:
    """Minimum powers of a cluster and whether they fit under the caps."""

    powers: np.ndarray
    feasible: bool
    first_violation: int | None
    margins: np.ndarray


def min_powers(instance: ClusterInstance, order=None) -> MinPowerReport:
    """Smallest powers meeting every QoS target when later users also sit at their minimum.

    ``first_violation`` is the lowest (0-based) user index whose minimum exceeds
    its cap, or ``None`` when the cluster is feasible.
    """
    order = _resolve_order(instance, order)
    a = np.exp2(instance.min_rates[order]) - 1.0
    # 2**(sum of later users' rate targets)
    later = np.concatenate([np.cumsum(instance.min_rates[order][::-1])[::-1][1:], [0.0]])
    pmin = np.empty(instance.size)
    pmin[order] = np.exp2(later) * a * instance.noise_power / instance.gains[order]
    margins = instance.max_powers - pmin
    bad = np.flatnonzero(margins < 0)
    first = int(bad.min()) if bad.size else None
    return MinPowerReport(pmin, first is None, first, margins)


def qos_violation(instance: ClusterInstance, powers, order=None) -> float:
    """Largest shortfall ``R_l^min - R_l`` over users (<= 0 when all targets are met)."""
    return float(np.max(instance.min_rates - per_user_rates(instance, powers, order)))


# ---------------------------------------------------------------------------
# inner problem: max log2(1 + S/s2) - beta * (Pf + sum P)
# ---------------------------------------------------------------------------

def _inner_problem(h, a, qmax, s2, beta, q, max_sweeps, tol_w):
    """Coordinate ascent in received-power space, modifying ``q`` in place.

    Each update maximises the concave objective exactly along one feasible
    direction: user ``l`` alone, or user ``l`` with every earlier user whose
    QoS is active riding along so that it stays active.  Starting from a
    feasible point every iterate stays feasible and the objective never
    decreases.  Returns the number of sweeps and whether the sweep converged.
    """
    n = len(h)
    inv_h = [1.0 / x for x in h]
    for sweep in range(1, max_sweeps + 1):
        moved = 0.0
        for l in range(n):
            total = s2 + sum(q)
            best_t, best_gain = 0.0, 0.0
            slack = [0.0] * l
            tail = total - sum(q[: l + 1])  # s2 + sum_{k>l} q_k
            lo = a[l] * tail - q[l]
            riders = []
            acc = total
            for j in range(l):
                acc -= q[j]  # s2 + sum_{k>j} q_k
                if a[j] > 0.0:
                    slack[j] = q[j] - a[j] * acc
                    if slack[j] <= _TIGHT_RTOL * q[j]:
                        riders.append(j)
                else:
                    slack[j] = math.inf
            for ride in ((), tuple(riders)) if riders else ((),):
                t, gain = _line_move(l, ride, q, h, inv_h, a, qmax, slack, total, beta, lo)
                if gain > best_gain:
                    best_t, best_gain, best_ride = t, gain, ride
            if best_gain > 0.0 and best_t != 0.0:
                dq = _direction(l, best_ride, a)
                for j, d in dq.items():
                    new = q[j] + best_t * d
                    if new < 0.0:
                        new = 0.0
                    moved = max(moved, abs(new - q[j]) * inv_h[j])
                    q[j] = new
        if moved < tol_w:
            return sweep, True
    return max_sweeps, False


def _direction(l, riders, a):
    """Received-power change per unit increase of ``q_l`` (riders keep their QoS active)."""
    dq = {l: 1.0}
    acc = 1.0  # sum of dq over users after the current one
    for j in range(l - 1, -1, -1):
        if j in riders:
            d = a[j] * acc
            dq[j] = d
            acc += d
    return dq


def _line_move(l, riders, q, h, inv_h, a, qmax, slack, total, beta, lo):
    """Best step ``t`` along the ride-along direction and the objective gain it buys."""
    dq = _direction(l, riders, a)
    d_sum = sum(dq.values())
    c_sum = sum(d * inv_h[j] for j, d in dq.items())
    hi = qmax[l] - q[l]
    for j in riders:
        hi = min(hi, (qmax[j] - q[j]) / dq[j])
    # users not riding lose slack at rate a_j * (sum of dq after j)
    acc = 0.0
    for j in range(l, -1, -1):
        if j != l and j not in riders and a[j] > 0.0:
            rate = a[j] * acc
            if rate > 0.0:
                hi = min(hi, max(slack[j], 0.0) / rate)
        acc += dq.get(j, 0.0)
    if riders:
        lo = max(lo, max(-q[j] / dq[j] for j in riders))
    if hi < lo:
        return 0.0, 0.0
    if beta <= 0.0:
        t = hi
    else:
        t = (d_sum / (beta * LN2 * c_sum) - total) / d_sum
        t = min(max(t, lo), hi)
    gain = math.log2((total + t * d_sum) / total) - beta * t * c_sum
    return t, gain


def _inner_static_box(h, a, qmax, qmin, s2, beta, q, max_sweeps, tol_w):
    """Literal low-complexity update: static [P_min, P_max] clipping, users 1..L."""
    n = len(h)
    for sweep in range(1, max_sweeps + 1):
        moved = 0.0
        for l in range(n):
            other = s2 + sum(q) - q[l]
            if beta <= 0.0:
                target = qmax[l]
            else:
                target = h[l] / (beta * LN2) - other
            new = min(max(target, qmin[l]), qmax[l])
            moved = max(moved, abs(new - q[l]) / h[l])
            q[l] = new
        if moved < tol_w:
            return sweep, True
    return max_sweeps, False


def _tail_cost_tables(h, a, qmax, s2):
    """Cheapest transmit power as a function of the tail sums, built from the last user up.

    With ``Y_j = s2 + sum_{k>=j} q_k`` the QoS and power caps only couple
    neighbours: ``(1 + a_j) Y_{j+1} <= Y_j <= Y_{j+1} + qmax_j``.  Transmit
    power is linear in the ``Y``, so the cheapest completion below a given
    ``Y_j`` is a convex piecewise-linear function of it.  Returns, per level,
    the breakpoints and values of that function (``None`` if the level is
    unreachable).
    """
    n = len(h)
    coef = [1.0 / h[0]] + [1.0 / h[j] - 1.0 / h[j - 1] for j in range(1, n)]
    xs, vs = np.array([s2]), np.array([0.0])
    tables = [None] * (n + 1)
    tables[n] = (xs, vs)
    for j in range(n - 1, -1, -1):
        lo = (1.0 + a[j]) * xs[0]
        hi = xs[-1] + qmax[j]
        if a[j] > 0.0:
            hi = min(hi, qmax[j] * (1.0 + a[j]) / a[j])
        if hi < lo * (1.0 - 1e-12):
            return None
        hi = max(hi, lo)
        cand = np.concatenate([[lo, hi], xs + qmax[j], xs * (1.0 + a[j])])
        ys = np.unique(cand[(cand >= lo) & (cand <= hi)])
        nxt = _best_next(ys, xs, vs, a[j], qmax[j])
        vals = coef[j] * ys + np.interp(nxt, xs, vs)
        xs, vs = ys, vals
        tables[j] = (xs, vs)
    return tables


def _best_next(y, xs, vs, a_j, qmax_j):
    """Cheapest admissible next tail sum for each value of the current one."""
    m = xs[int(np.argmin(vs))]
    lo = np.maximum(xs[0], y - qmax_j)
    hi = np.minimum(xs[-1], y / (1.0 + a_j))
    return np.minimum(np.maximum(m, lo), hi)


def _reduced_inner(h, a, qmax, s2, beta, pf):
    """Exact maximiser of the inner problem for any decode order.

    The objective depends on the received total ``Y_0`` and the transmit power,
    and the cheapest transmit power for a given ``Y_0`` is convex
    piecewise-linear, so the problem is a concave scalar search over ``Y_0``.
    """
    tables = _tail_cost_tables(h, a, qmax, s2)
    n = len(h)
    xs, vs = tables[0]
    if xs.size == 1:
        y = float(xs[0])
    else:
        best = None
        for i in range(xs.size - 1):
            x0, x1 = xs[i], xs[i + 1]
            slope = (vs[i + 1] - vs[i]) / (x1 - x0) if x1 > x0 else 0.0
            if beta <= 0.0 or slope <= 0.0:
                cand = x1
            else:
                cand = min(max(1.0 / (beta * LN2 * slope), x0), x1)
            val = math.log2(cand / s2) - beta * (pf + float(np.interp(cand, xs, vs)))
            if best is None or val > best[0]:
                best = (val, cand)
        y = best[1]
    q = [0.0] * n
    for j in range(n):
        if j == n - 1:
            nxt = s2
        else:
            nx, nv = tables[j + 1]
            nxt = float(_best_next(np.array([y]), nx, nv, a[j], qmax[j])[0])
        q[j] = min(max(y - nxt, a[j] * nxt), qmax[j])
        y = nxt
    return q


def _is_gain_order(instance: ClusterInstance, order) -> bool:
    return order is None or bool(np.all(np.diff(instance.gains[np.asarray(order)]) <= 0))


def _ordered_arrays(instance: ClusterInstance, order):
    order = _resolve_order(instance, order)
    h = instance.gains[order].tolist()
    a = (np.exp2(instance.min_rates[order]) - 1.0).tolist()
    qmax = (instance.max_powers[order] * instance.gains[order]).tolist()
    return order, h, a, qmax


def _min_received(h, a, s2):
    qmin = [0.0] * len(h)
    tail = s2
    for l in range(len(h) - 1, -1, -1):
        qmin[l] = a[l] * tail
        tail += qmin[l]
    return qmin


def solve_inner(instance: ClusterInstance, beta: float, order=None, mode: str = "auto",
                max_sweeps: int = MAX_SWEEPS, start=None) -> tuple[np.ndarray, int, bool]:
    """Maximise ``log2(1 + sum P h / s2) - beta (Pf + sum P)`` over the feasible set.

    Modes:

    ``"coordinate"``
        Per-user closed-form updates from the minimum powers, users taken in
        decode order, each clipped to the interval that keeps every QoS target
        met (an earlier user whose target is active rides along).  Exact when
        users are decoded by decreasing gain.
    ``"static-box"``
        The same closed-form update clipped to the static ``[P_min, P_max]``
        box.  Can stop at a point that violates an earlier user's target.
    ``"reduced"``
        Exact scalar search over the received total; valid for any decode order.
    ``"auto"``
        ``"coordinate"`` for decreasing-gain decoding, ``"reduced"`` otherwise.

    Returns ``(powers, sweeps, converged)``.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    report = min_powers(instance, order)
    if not report.feasible:
        raise InfeasibleError(f"user {report.first_violation} cannot meet its minimum rate")
    if mode == "auto":
        mode = "coordinate" if _is_gain_order(instance, order) else "reduced"
    order, h, a, qmax = _ordered_arrays(instance, order)
    s2 = instance.noise_power
    qmin = _min_received(h, a, s2)
    if start is None:
        q = list(qmin)
    else:
        q = (np.asarray(start, dtype=float)[order] * np.asarray(h)).tolist()
    if mode == "coordinate":
        sweeps, ok = _inner_problem(h, a, qmax, s2, beta, q, max_sweeps, INNER_TOL)
    elif mode == "static-box":
        sweeps, ok = _inner_static_box(h, a, qmax, qmin, s2, beta, q, max_sweeps, INNER_TOL)
    elif mode == "reduced":
        q, sweeps, ok = _reduced_inner(h, a, qmax, s2, beta, instance.circuit_power), 1, True
    else:
        raise ValueError(f"unknown mode {mode!r}")
    powers = np.empty(instance.size)
    powers[order] = np.asarray(q) / np.asarray(h)
    return np.minimum(powers, instance.max_powers), sweeps, ok


def _solution(instance, powers, order, **kw) -> EeSolution:
    rates = per_user_rates(instance, powers, order)
    total = float(powers.sum())
    rsum = sum_rate(instance, powers)
    return EeSolution(powers, rates, rsum, total, rsum / (instance.circuit_power + total), **kw)


def maximize_ee(instance: ClusterInstance, order=None, mode: str = "auto",
                eps: float = DINKELBACH_EPS, max_outer: int = MAX_OUTER) -> EeSolution:
    """EE-optimal powers of one cluster (Dinkelbach outer loop, coordinate inner solver).

    Infeasible clusters come back with ``feasible=False`` and zero EE.
    """
    report = min_powers(instance, order)
    if not report.feasible:
        return EeSolution.infeasible(instance.size, first_violation=report.first_violation)
    beta = 0.0
    betas = []
    sweeps_total = 0
    converged = True
    powers = report.powers
    s2, pf = instance.noise_power, instance.circuit_power
    for it in range(1, max_outer + 1):
        powers, sweeps, ok = solve_inner(instance, beta, order, mode)
        sweeps_total += sweeps
        converged &= ok
        rsum = math.log2(1.0 + float(powers @ instance.gains) / s2)
        denom = pf + float(powers.sum())
        f = rsum - beta * denom
        betas.append(beta)
        if f <= eps or denom <= 0:
            break
        beta = rsum / denom
    else:
        converged = False
    return _solution(instance, powers, order, dinkelbach_iterations=it,
                     inner_iterations=sweeps_total, feasible=True,
                     diagnostics={"betas": betas, "converged": converged,
                                  "final_objective": f, "mode": mode})


def maximize_se(instance: ClusterInstance, order=None) -> EeSolution:
    """Sum-rate-maximising powers (MaxSE baseline), reported as an :class:`EeSolution`.

    Maximises the total received power subject to the QoS and power caps.
    Among maximisers the received power is pushed towards earlier (stronger)
    users, which also minimises the transmit power spent.
    """
    report = min_powers(instance, order)
    if not report.feasible:
        return EeSolution.infeasible(instance.size, first_violation=report.first_violation)
    order, h, a, qmax = _ordered_arrays(instance, order)
    s2 = instance.noise_power
    n = len(h)
    # tail sums Y_j = s2 + sum_{k>=j} q_k; reachable interval of each Y_j from the end
    lo = [0.0] * (n + 1)
    hi = [0.0] * (n + 1)
    lo[n] = hi[n] = s2
    for j in range(n - 1, -1, -1):
        lo[j] = (1.0 + a[j]) * lo[j + 1]
        cap = hi[j + 1] + qmax[j]
        if a[j] > 0.0:
            cap = min(cap, qmax[j] * (1.0 + a[j]) / a[j])
        hi[j] = cap
    y = hi[0]
    q = [0.0] * n
    for j in range(n):
        nxt = s2 if j == n - 1 else max(y - qmax[j], lo[j + 1])
        q[j] = y - nxt
        y = nxt
    powers = np.empty(n)
    powers[order] = np.asarray(q) / np.asarray(h)
    powers = np.clip(powers, 0.0, instance.max_powers)
    return _solution(instance, powers, order, feasible=True)


def solve(instance: ClusterInstance, scheme: str = "ee", order=None) -> EeSolution:
    if scheme == "ee":
        return maximize_ee(instance, order)
    if scheme == "se":
        return maximize_se(instance, order)
    raise ValueError(f"unknown scheme {scheme!r}")


def make_instance(gains: Sequence[float], min_rate, max_power, circuit_power_per_user: float,
                  noise_power: float) -> ClusterInstance:
    """Build a cluster from unsorted gains with the circuit power scaled by cluster size."""
    gains = np.sort(np.asarray(gains, dtype=float))[::-1]
    return ClusterInstance(gains, min_rate, max_power,
                           circuit_power_per_user * gains.size, noise_power)
