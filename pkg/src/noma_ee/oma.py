"""Orthogonal access inside a cluster.

Each of the ``L`` users of an RB gets a ``1/L`` share of it and concentrates
its power there, giving the rate ``(1/L) log2(1 + L P |h|^2 / sigma2)``.
Users never interfere, so with the Dinkelbach parameter fixed the power
allocation splits into independent scalar problems with closed-form answers.
"""

from __future__ import annotations

import math

import numpy as np

from .cluster import DINKELBACH_EPS, LN2, MAX_OUTER, ClusterInstance, EeSolution, _check_powers


def oma_rates(instance: ClusterInstance, powers) -> np.ndarray:
    powers = _check_powers(instance, powers)
    n = instance.size
    return np.log2(1.0 + n * powers * instance.gains / instance.noise_power) / n


def oma_min_powers(instance: ClusterInstance) -> tuple[np.ndarray, bool]:
    """Smallest powers reaching every rate target, and whether they fit under the caps."""
    n = instance.size
    pmin = np.expm1(n * LN2 * instance.min_rates) * instance.noise_power / (n * instance.gains)
    return pmin, bool(np.all(pmin <= instance.max_powers))


def _oma_inner(instance: ClusterInstance, beta: float, pmin: np.ndarray) -> np.ndarray:
    """Maximiser of ``sum(rates) - beta * sum(P)`` over ``[pmin, pmax]``, user by user."""
    if beta <= 0.0:
        return instance.max_powers.copy()
    n = instance.size
    # d/dP (1/L) log2(1 + L P h / s2) = h / (ln2 (s2 + L P h)) = beta
    stationary = (1.0 / (beta * LN2) - instance.noise_power / instance.gains) / n
    return np.clip(stationary, pmin, instance.max_powers)


def oma_maximize_ee(instance: ClusterInstance, eps: float = DINKELBACH_EPS,
                    max_outer: int = MAX_OUTER) -> EeSolution:
    """EE-optimal powers of an OMA cluster (Dinkelbach with closed-form inner steps)."""
    pmin, feasible = oma_min_powers(instance)
    if not feasible:
        bad = np.flatnonzero(pmin > instance.max_powers)
        return EeSolution.infeasible(instance.size, first_violation=int(bad[0]))
    pf = instance.circuit_power
    beta = 0.0
    betas = []
    converged = False
    for it in range(1, max_outer + 1):
        powers = _oma_inner(instance, beta, pmin)
        rsum = float(oma_rates(instance, powers).sum())
        denom = pf + float(powers.sum())
        f = rsum - beta * denom
        betas.append(beta)
        if f <= eps or denom <= 0.0:
            converged = True
            break
        beta = rsum / denom
    rates = oma_rates(instance, powers)
    rsum = float(rates.sum())
    total = float(powers.sum())
    ee = rsum / (pf + total) if pf + total > 0.0 else math.nan
    return EeSolution(powers, rates, rsum, total, ee, dinkelbach_iterations=it,
                      inner_iterations=it, feasible=True,
                      diagnostics={"betas": betas, "converged": converged, "final_objective": f})
