"""Brute-force reference solvers for small problems.

These are deliberately naive: a refined grid over the exact feasible power
region of one cluster, and full enumeration of user-RB matchings.  They exist
to check the fast solvers, not to replace them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .cluster import ClusterInstance, EeSolution, _resolve_order, maximize_ee, min_powers, per_user_rates


#: refining stops only after this many rounds in a row without progress
STALE_SHRINKS = 4


@dataclass(frozen=True)
class GridSpec:
    points_per_axis: int = 32
    refinement_rounds: int = 4
    shrink_factor: float = 0.25
    #: keep refining until the grid step is below this fraction of each axis
    resolution: float = 1e-4
    #: hard stop on the number of grid evaluations
    max_rounds: int = 400

    def __post_init__(self):
        if self.points_per_axis < 8:
            raise ValueError("points_per_axis must be at least 8")
        if not 0.0 < self.shrink_factor < 1.0:
            raise ValueError("shrink_factor must lie in (0, 1)")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be positive")
        if self.refinement_rounds < 0:
            raise ValueError("refinement_rounds must be non-negative")


def _reachable_tails(a, qmax, s2):
    """Interval of every attainable tail sum ``Y_j = s2 + sum_{k>=j} q_k``.

    Returns ``(lo, hi)`` with ``hi[j + 1]`` already capped so that user ``j``
    can still meet its target, or ``None`` when no feasible point exists.
    """
    n = len(a)
    lo = np.empty(n + 1)
    hi = np.empty(n + 1)
    lo[n] = hi[n] = s2
    for j in range(n - 1, -1, -1):
        if a[j] > 0:
            hi[j + 1] = min(hi[j + 1], qmax[j] / a[j])
        if hi[j + 1] < lo[j + 1] * (1 - 1e-12):
            return None
        lo[j] = (1.0 + a[j]) * lo[j + 1]
        hi[j] = hi[j + 1] + qmax[j]
    return lo, hi


def _powers_from_unit(t, h, a, qmax, tails, s2):
    """Map unit-cube points onto the feasible set via nested tail sums.

    The first coordinate picks ``Y_0`` (which alone fixes the sum rate); each
    later one picks ``Y_j`` inside the interval left open by ``Y_{j-1}``.
    """
    lo, hi = tails
    n = len(h)
    y = np.empty((t.shape[0], n + 1))
    y[:, 0] = lo[0] + t[:, 0] * (hi[0] - lo[0])
    y[:, n] = s2
    for j in range(1, n):
        low = np.maximum(lo[j], y[:, j - 1] - qmax[j - 1])
        high = np.minimum(hi[j], y[:, j - 1] / (1.0 + a[j - 1]))
        high = np.maximum(high, low)
        y[:, j] = low + t[:, j] * (high - low)
    q = np.maximum(y[:, :-1] - y[:, 1:], 0.0)
    return np.minimum(q / h, qmax / h), y[:, 0]


def grid_search_ee(instance: ClusterInstance, grid: GridSpec = GridSpec(), order=None) -> EeSolution:
    """Best EE over a grid covering the exact feasible region, refined around the incumbent.

    Every grid point is feasible by construction.  The grid lives on nested
    tail sums of received power: the first axis sets the total received power,
    each further axis how much of it the later decoded users carry.
    """
    n = instance.size
    if n > 4:
        raise ValueError("grid search is limited to clusters of at most 4 users")
    report = min_powers(instance, order)
    if not report.feasible:
        return EeSolution.infeasible(n, first_violation=report.first_violation)
    order = _resolve_order(instance, order)
    h = instance.gains[order]
    a = np.exp2(instance.min_rates[order]) - 1.0
    qmax = instance.max_powers[order] * h
    tails = _reachable_tails(a, qmax, instance.noise_power)
    s2, pf = instance.noise_power, instance.circuit_power

    center = np.full(n, 0.5)
    width = 1.0
    best_ee = -np.inf
    best_t = None
    history = []
    rounds = shrinks = stale = 0
    step = width / (grid.points_per_axis - 1)
    while rounds < grid.max_rounds:
        lo = np.clip(center - width / 2, 0.0, 1.0 - width)
        axes = [np.linspace(lo[i], lo[i] + width, grid.points_per_axis) for i in range(n)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
        p, y0 = _powers_from_unit(mesh, h, a, qmax, tails, s2)
        ee = np.log2(y0 / s2) / (pf + p.sum(axis=1))
        ee[~np.isfinite(ee)] = -np.inf  # points outside the feasible set
        k = int(np.argmax(ee))  # lowest index wins ties
        improved = ee[k] > best_ee
        if improved:
            stale = 0 if ee[k] > best_ee + 1e-12 * abs(best_ee) else stale + 1
            best_ee, best_t = float(ee[k]), mesh[k].copy()
        else:
            stale += 1
        history.append(best_ee)
        rounds += 1
        step = width / (grid.points_per_axis - 1)
        # Shrink only once the incumbent stops moving; while it still improves
        # the window slides along with it, so a narrow ridge cannot trap the
        # search at a coarse resolution.
        if improved and rounds > 1 and stale == 0:
            center = best_t
            continue
        # An optimum close to an axis end needs a step far below the axis
        # resolution, so also wait until refining stops paying off.
        if (shrinks >= grid.refinement_rounds and step <= grid.resolution
                and (stale >= STALE_SHRINKS or width < 1e-15)):
            break
        center = best_t
        width *= grid.shrink_factor
        shrinks += 1
    p, _ = _powers_from_unit(best_t[None, :], h, a, qmax, tails, s2)
    powers = np.empty(n)
    powers[order] = np.minimum(p[0], instance.max_powers[order])
    rates = per_user_rates(instance, powers, order)
    total = float(powers.sum())
    rsum = float(np.log2(1.0 + powers @ instance.gains / s2))
    return EeSolution(powers, rates, rsum, total, rsum / (pf + total), feasible=True,
                      diagnostics={"history": history, "rounds": rounds, "shrinks": shrinks, "step": step})


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-13, max_iter: int = 500) -> float:
    """Maximiser of a unimodal scalar function on ``[lo, hi]``."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    candidates = [lo, hi, (a + b) / 2]
    return max(candidates, key=f)


def count_matchings(cluster_sizes) -> int:
    total = sum(cluster_sizes)
    count = math.factorial(total)
    for size in cluster_sizes:
        count //= math.factorial(size)
    return count


def iter_matchings(cluster_sizes):
    """Yield every assignment vector (user -> RB) with the given cluster sizes."""
    sizes = list(cluster_sizes)
    users = tuple(range(sum(sizes)))

    def rec(remaining, rb):
        if rb == len(sizes):
            yield {}
            return
        for group in itertools.combinations(remaining, sizes[rb]):
            rest = tuple(u for u in remaining if u not in group)
            for tail in rec(rest, rb + 1):
                tail = dict(tail)
                for u in group:
                    tail[u] = rb
                yield tail

    for assignment in rec(users, 0):
        yield np.array([assignment[u] for u in users], dtype=int)


class MatchingBudgetExceeded(RuntimeError):
    pass


def exhaustive_matching(scenario, pa_solver=maximize_ee, budget: int = 100_000):
    """Enumerate all valid matchings and return the one with the best system EE."""
    from .matching import Matching, SystemEvaluator

    count = count_matchings(scenario.cluster_sizes)
    if count > budget:
        raise MatchingBudgetExceeded(f"{count} matchings exceed the budget of {budget}")
    evaluator = SystemEvaluator(scenario, pa_solver)
    best = None
    for assignment in iter_matchings(scenario.cluster_sizes):
        matching = Matching(assignment, scenario.num_rbs)
        value = evaluator.total(matching)
        if best is None or value > best[0] + 1e-15:
            best = (value, matching)
    result = evaluator.solution(best[1])
    result.diagnostics["matchings_enumerated"] = count
    return result
