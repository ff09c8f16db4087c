"""User-to-RB association for hybrid NOMA-OMA systems.

Each user occupies exactly one RB and RB ``m`` hosts exactly ``L_m`` users.
Inside an RB the users share it by NOMA (or, for the OMA baselines, by an
equal orthogonal split); across RBs they do not interact, so the system EE
is the sum of per-cluster EEs.

The proposed scheme starts from a greedy gain-based assignment and then
applies pairwise swaps that strictly raise the EE of the two RBs involved.
Baselines: gain-weighted maximum weight matching (MWM), alternating
rate-weighted MWM with OMA power allocation, deferred acceptance driven by
cluster EE, and a uniformly random assignment.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from .channel import MATCHING_STREAM, Scenario, trial_rng
from .cluster import ClusterInstance, EeSolution, maximize_ee
from .oma import oma_maximize_ee

PaSolver = Callable[[ClusterInstance], EeSolution]

#: a swap must raise the two-RB EE sum by more than this to be committed
SWAP_THRESHOLD = 1e-10
#: OMA-MWM stops once an alternation gains less than this (bit/s/Hz/W)
ALTERNATION_TOL = 1e-8
MAX_ALTERNATIONS = 50

PA_SOLVERS: dict[str, PaSolver] = {"noma": maximize_ee, "oma": oma_maximize_ee}


def _solver(pa_solver: PaSolver | str | None) -> PaSolver:
    if pa_solver is None:
        return maximize_ee
    if isinstance(pa_solver, str):
        return PA_SOLVERS[pa_solver]
    return pa_solver


@dataclass(frozen=True)
class Matching:
    """Assignment of every user to one RB."""

    assignment: np.ndarray
    num_rbs: int

    def __post_init__(self):
        a = np.array(self.assignment, dtype=int)
        if a.ndim != 1 or (a.size and (a.min() < 0 or a.max() >= self.num_rbs)):
            raise ValueError("assignment entries must be RB indices")
        a.setflags(write=False)
        object.__setattr__(self, "assignment", a)

    @property
    def inverse(self) -> tuple[tuple[int, ...], ...]:
        """Members of each RB, in increasing user index."""
        return tuple(tuple(int(u) for u in np.flatnonzero(self.assignment == m))
                     for m in range(self.num_rbs))

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.num_rbs)

    def check(self, cluster_sizes) -> None:
        """Raise unless every RB holds exactly its prescribed number of users."""
        if not np.array_equal(self.sizes(), np.asarray(cluster_sizes)):
            raise ValueError(f"RB occupancy {self.sizes().tolist()} != {list(cluster_sizes)}")

    def swapped(self, u: int, k: int) -> "Matching":
        a = self.assignment.copy()
        a[u], a[k] = a[k], a[u]
        return Matching(a, self.num_rbs)

    @classmethod
    def from_slots(cls, slot_users, cluster_sizes) -> "Matching":
        """Matching from a list giving the user placed in each RB slot."""
        slot_rb = np.repeat(np.arange(len(cluster_sizes)), cluster_sizes)
        a = np.empty(len(slot_users), dtype=int)
        a[np.asarray(slot_users)] = slot_rb
        return cls(a, len(cluster_sizes))


@dataclass(frozen=True)
class SwapRecord:
    pass_index: int
    u: int
    k: int
    ee_before: float
    ee_after: float


@dataclass
class SystemSolution:
    matching: Matching
    clusters: list[EeSolution]
    members: list[np.ndarray]  # users of each RB in decoding (descending gain) order
    system_ee: float
    swap_count: int = 0
    swap_trace: list[SwapRecord] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def infeasible_rbs(self) -> list[int]:
        return [m for m, c in enumerate(self.clusters) if not c.feasible]

    def user_powers(self) -> np.ndarray:
        p = np.zeros(self.matching.assignment.size)
        for members, sol in zip(self.members, self.clusters):
            p[members] = sol.powers
        return p

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["row", "rb", "users", "feasible", "ee", "sum_rate", "total_power_w"])
        for m, (members, sol) in enumerate(zip(self.members, self.clusters)):
            w.writerow(["cluster", m, " ".join(str(int(u)) for u in members), int(sol.feasible),
                        repr(sol.ee), repr(sol.sum_rate), repr(sol.total_power)])
        w.writerow(["summary", "", "", int(not self.infeasible_rbs), repr(self.system_ee),
                    repr(sum(c.sum_rate for c in self.clusters)),
                    repr(sum(c.total_power for c in self.clusters))])
        return buf.getvalue()

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pass", "u", "k", "ee_before", "ee_after"])
        for r in self.swap_trace:
            w.writerow([r.pass_index, r.u, r.k, repr(r.ee_before), repr(r.ee_after)])
        return buf.getvalue()


class SystemEvaluator:
    """Per-cluster power allocation with a cache keyed on (RB, member set).

    Swap matching revisits the same clusters many times; the cache makes each
    distinct cluster cost one solve.
    """

    def __init__(self, scenario: Scenario, pa_solver: PaSolver | str | None = None):
        self.scenario = scenario
        self.pa_solver = _solver(pa_solver)
        self._cache: dict[tuple[int, frozenset], tuple[EeSolution, np.ndarray]] = {}
        self.solves = 0

    def cluster(self, rb: int, members) -> tuple[EeSolution, np.ndarray]:
        key = (int(rb), frozenset(int(u) for u in members))
        hit = self._cache.get(key)
        if hit is None:
            inst, ordered = self.scenario.cluster(rb, sorted(key[1]))
            hit = (self.pa_solver(inst), ordered)
            self._cache[key] = hit
            self.solves += 1
        return hit

    def cluster_ee(self, rb: int, members) -> float:
        sol = self.cluster(rb, members)[0]
        return sol.ee if sol.feasible else 0.0

    def total(self, matching: Matching) -> float:
        return sum(self.cluster_ee(m, members) for m, members in enumerate(matching.inverse))

    def solution(self, matching: Matching, **kw) -> SystemSolution:
        clusters, members = [], []
        for m, users in enumerate(matching.inverse):
            sol, ordered = self.cluster(m, users)
            clusters.append(sol)
            members.append(ordered)
        total = sum(c.ee for c in clusters if c.feasible)
        out = SystemSolution(matching, clusters, members, total, **kw)
        out.diagnostics.setdefault("infeasible_rbs", out.infeasible_rbs)
        return out


def system_ee(scenario: Scenario, matching: Matching, pa_solver: PaSolver | str | None = None) -> SystemSolution:
    """Solve the power allocation of every cluster of ``matching``; infeasible RBs count as 0."""
    matching.check(scenario.cluster_sizes)
    return SystemEvaluator(scenario, pa_solver).solution(matching)


# ---------------------------------------------------------------------------
# initial assignments
# ---------------------------------------------------------------------------

def greedy_init(scenario: Scenario) -> Matching:
    """Round-based greedy: each round hands every open RB its best remaining user.

    Within a round the globally largest remaining (user, RB) gain is fixed
    first.  RB ``m`` takes part in round ``k`` only while it still has room,
    so the result respects the scenario's cluster sizes.
    """
    g = scenario.gains
    u_count, m_count = g.shape
    sizes = scenario.cluster_sizes
    assignment = np.full(u_count, -1, dtype=int)
    free_users = np.ones(u_count, dtype=bool)
    for k in range(int(sizes.max())):
        open_rbs = sizes > k
        while open_rbs.any() and free_users.any():
            masked = np.where(free_users[:, None] & open_rbs[None, :], g, -np.inf)
            u, m = np.unravel_index(int(np.argmax(masked)), masked.shape)
            assignment[u] = m
            free_users[u] = False
            open_rbs[m] = False
    return Matching(assignment, m_count)


def mwm_gain(scenario: Scenario) -> Matching:
    """Assignment maximising the sum of gains, with RB ``m`` split into ``L_m`` slots."""
    slot_rb = np.repeat(np.arange(scenario.num_rbs), scenario.cluster_sizes)
    weights = scenario.gains[:, slot_rb]
    users, slots = linear_sum_assignment(weights / weights.max(), maximize=True)
    assignment = np.empty(scenario.num_users, dtype=int)
    assignment[users] = slot_rb[slots]
    return Matching(assignment, scenario.num_rbs)


def random_match(scenario: Scenario, seed: int = 0, trial: int = 0) -> Matching:
    """Uniformly random assignment with the scenario's cluster sizes."""
    perm = trial_rng(seed, trial, MATCHING_STREAM).permutation(scenario.num_users)
    return Matching.from_slots(perm, scenario.cluster_sizes)


# ---------------------------------------------------------------------------
# swap matching
# ---------------------------------------------------------------------------

def swap_match(scenario: Scenario, pa_solver: PaSolver | str | None = None,
               initial: Matching | None = None, threshold: float = SWAP_THRESHOLD,
               max_passes: int = 10_000) -> SystemSolution:
    """Greedy initial assignment improved by pairwise swaps until none helps.

    Pairs ``(u, k)`` are visited in lexicographic order and a swap is
    committed as soon as it raises the EE sum of the two RBs involved by more
    than ``threshold``.  Passes repeat until one commits nothing.
    """
    ev = SystemEvaluator(scenario, pa_solver)
    matching = greedy_init(scenario) if initial is None else initial
    matching.check(scenario.cluster_sizes)
    a = matching.assignment.copy()
    members = [set(m) for m in matching.inverse]
    u_count = scenario.num_users
    total = sum(ev.cluster_ee(m, members[m]) for m in range(scenario.num_rbs))
    trace: list[SwapRecord] = []
    passes = 0
    converged = False
    while passes < max_passes:
        passes += 1
        committed = False
        for u in range(u_count):
            for k in range(u_count):
                mu, mk = a[u], a[k]
                if mu == mk:
                    continue
                before = ev.cluster_ee(mu, members[mu]) + ev.cluster_ee(mk, members[mk])
                new_u = (members[mu] - {u}) | {k}
                new_k = (members[mk] - {k}) | {u}
                after = ev.cluster_ee(mu, new_u) + ev.cluster_ee(mk, new_k)
                if after - before > threshold:
                    members[mu], members[mk] = new_u, new_k
                    a[u], a[k] = mk, mu
                    new_total = total + after - before
                    trace.append(SwapRecord(passes, u, k, total, new_total))
                    total = new_total
                    committed = True
        if not committed:
            converged = True
            break
    result = ev.solution(Matching(a, scenario.num_rbs), swap_count=len(trace), swap_trace=trace)
    result.diagnostics.update(passes=passes, converged=converged, cluster_solves=ev.solves)
    return result


def is_swap_stable(scenario: Scenario, solution: SystemSolution, pa_solver: PaSolver | str | None = None,
                   threshold: float = SWAP_THRESHOLD) -> bool:
    """True when no single pairwise swap raises the two-RB EE sum by more than ``threshold``."""
    ev = SystemEvaluator(scenario, pa_solver)
    a = solution.matching.assignment
    members = [set(m) for m in solution.matching.inverse]
    for u in range(a.size):
        for k in range(u + 1, a.size):
            mu, mk = a[u], a[k]
            if mu == mk:
                continue
            before = ev.cluster_ee(mu, members[mu]) + ev.cluster_ee(mk, members[mk])
            after = (ev.cluster_ee(mu, (members[mu] - {u}) | {k})
                     + ev.cluster_ee(mk, (members[mk] - {k}) | {u}))
            if after - before > threshold:
                return False
    return True


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def oma_mwm(scenario: Scenario, max_alternations: int = MAX_ALTERNATIONS,
            tol: float = ALTERNATION_TOL) -> SystemSolution:
    """Alternate rate-weighted assignment (powers fixed) with OMA power allocation.

    Users start at full power.  With powers fixed the system EE is maximised
    by maximising the sum of OMA rates, an assignment problem.  The best
    matching seen is returned, so the reported EE never decreases.
    """
    ev = SystemEvaluator(scenario, oma_maximize_ee)
    slot_rb = np.repeat(np.arange(scenario.num_rbs), scenario.cluster_sizes)
    slot_size = scenario.cluster_sizes[slot_rb]
    powers = scenario.max_powers.copy()
    s2 = scenario.noise_power
    best: SystemSolution | None = None
    history = []
    for it in range(1, max_alternations + 1):
        rx = powers[:, None] * scenario.gains[:, slot_rb]
        weights = np.log2(1.0 + slot_size * rx / s2) / slot_size
        users, slots = linear_sum_assignment(weights, maximize=True)
        assignment = np.empty(scenario.num_users, dtype=int)
        assignment[users] = slot_rb[slots]
        sol = ev.solution(Matching(assignment, scenario.num_rbs))
        history.append(sol.system_ee)
        improved = best is None or sol.system_ee > best.system_ee + tol
        if best is None or sol.system_ee > best.system_ee:
            best = sol
        if not improved:
            break
        # users of infeasible clusters keep their previous power
        new_powers = sol.user_powers()
        for m in sol.infeasible_rbs:
            new_powers[sol.members[m]] = powers[sol.members[m]]
        powers = new_powers
    best.diagnostics.update(alternations=it, ee_history=history)
    return best


def dc_match(scenario: Scenario, pa_solver: PaSolver | str | None = None) -> SystemSolution:
    """Deferred acceptance: users propose by gain, RBs keep the members that maximise their EE.

    An over-subscribed RB builds its keep-set greedily, adding at each step
    the candidate whose inclusion gives the largest cluster EE.
    """
    ev = SystemEvaluator(scenario, pa_solver)
    g = scenario.gains
    sizes = scenario.cluster_sizes
    prefs = np.argsort(-g, axis=1, kind="stable")
    next_choice = np.zeros(scenario.num_users, dtype=int)
    held: list[list[int]] = [[] for _ in range(scenario.num_rbs)]
    free = list(range(scenario.num_users))
    forced = []
    rejections = 0
    while free:
        proposals: dict[int, list[int]] = {}
        still_free = []
        for u in free:
            if next_choice[u] >= scenario.num_rbs:
                still_free.append(u)
                continue
            m = int(prefs[u, next_choice[u]])
            next_choice[u] += 1
            proposals.setdefault(m, []).append(u)
        if not proposals:
            # every RB rejected these users; cannot happen when capacities sum to U
            for u in still_free:
                m = int(np.flatnonzero([len(h) < s for h, s in zip(held, sizes)])[0])
                held[m].append(u)
                forced.append(u)
            break
        for m in sorted(proposals):
            candidates = held[m] + proposals[m]
            if len(candidates) <= sizes[m]:
                held[m] = candidates
                continue
            keep: list[int] = []
            pool = sorted(candidates)
            while len(keep) < sizes[m]:
                scores = [ev.cluster_ee(m, keep + [c]) for c in pool]
                pick = pool[int(np.argmax(scores))]
                keep.append(pick)
                pool.remove(pick)
            held[m] = keep
            still_free.extend(pool)
            rejections += len(pool)
        free = still_free
    assignment = np.empty(scenario.num_users, dtype=int)
    for m, users in enumerate(held):
        assignment[users] = m
    sol = ev.solution(Matching(assignment, scenario.num_rbs))
    sol.diagnostics.update(rejections=rejections, forced_users=forced)
    return sol


SCHEMES = ("HMA-prop", "HMA-MWM", "HMA-DC", "HMA-rand", "OMA-swap", "OMA-MWM")


def run_scheme(scheme: str, scenario: Scenario, seed: int = 0, trial: int = 0) -> SystemSolution:
    """Run one of the named association schemes on ``scenario``."""
    if scheme == "HMA-prop":
        return swap_match(scenario, maximize_ee)
    if scheme == "HMA-MWM":
        return system_ee(scenario, mwm_gain(scenario), maximize_ee)
    if scheme == "HMA-DC":
        return dc_match(scenario, maximize_ee)
    if scheme == "HMA-rand":
        return system_ee(scenario, random_match(scenario, seed, trial), maximize_ee)
    if scheme == "OMA-swap":
        return swap_match(scenario, oma_maximize_ee)
    if scheme == "OMA-MWM":
        return oma_mwm(scenario)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
