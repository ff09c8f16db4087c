"""Random multi-RB scenarios: user placement, path loss and Rayleigh fading.

Gains are drawn independently for every (user, RB) pair, so the same user
can see very different channels on different RBs.  All randomness flows
from a counter-based generator keyed on ``(seed, trial)``; any trial of an
ensemble can therefore be regenerated on its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cluster import ClusterInstance

#: users closer than this to the base station are moved out to it (metres)
MIN_DISTANCE_M = 1.0


def pathloss_db(distance_km) -> float | np.ndarray:
    """Path loss ``128 + 35 log10(d)`` in dB, distance in kilometres."""
    d = np.asarray(distance_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 128.0 + 35.0 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def noise_power(psd_dbm_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise power in watts over ``bandwidth_hz``."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return dbm_to_watt(psd_dbm_hz + 10.0 * math.log10(bandwidth_hz))


def dbm_to_watt(x):
    out = 10.0 ** (np.asarray(x, dtype=float) / 10.0) / 1000.0
    return float(out) if out.ndim == 0 else out


def watt_to_dbm(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0):
        raise ValueError("power must be positive to express in dBm")
    out = 10.0 * np.log10(arr * 1000.0)
    return float(out) if out.ndim == 0 else out


def cluster_sizes(num_users: int, num_rbs: int) -> np.ndarray:
    """Users per RB: ``ceil(U/M)`` on the first RBs, one fewer on the rest."""
    if not num_users >= num_rbs >= 1:
        raise ValueError(f"need U >= M >= 1, got U={num_users}, M={num_rbs}")
    k = -(-num_users // num_rbs)
    big = num_users - num_rbs * (k - 1)
    return np.array([k] * big + [k - 1] * (num_rbs - big), dtype=int)


# ---------------------------------------------------------------------------
# placement
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformDisk:
    """Users uniform over the area of a disk centred on the base station."""

    radius: float

    def __post_init__(self):
        if not self.radius > MIN_DISTANCE_M:
            raise ValueError(f"radius must exceed {MIN_DISTANCE_M} m")

    def distances(self, num_users: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(num_users)
        r0 = MIN_DISTANCE_M
        return np.sqrt(r0**2 + (self.radius**2 - r0**2) * u)

    def to_dict(self) -> dict:
        return {"type": "uniform-disk", "radius": self.radius}


@dataclass(frozen=True)
class Ringed:
    """Users on concentric circles, dealt round-robin over the radii."""

    radii: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        if not self.radii or min(self.radii) < MIN_DISTANCE_M:
            raise ValueError(f"radii must be non-empty and at least {MIN_DISTANCE_M} m")

    def distances(self, num_users: int, rng: np.random.Generator) -> np.ndarray:
        # only the distance matters for the gain, so the angle is not drawn
        return np.array([self.radii[u % len(self.radii)] for u in range(num_users)])

    def to_dict(self) -> dict:
        return {"type": "ringed", "radii": list(self.radii)}


def placement_from_dict(d: dict):
    kind = d.get("type")
    if kind == "uniform-disk":
        return UniformDisk(float(d["radius"]))
    if kind == "ringed":
        return Ringed(tuple(d["radii"]))
    raise ValueError(f"unknown placement type {kind!r}")


# ---------------------------------------------------------------------------
# configuration and scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioConfig:
    num_users: int = 12
    num_rbs: int = 4
    placement: UniformDisk | Ringed = field(default_factory=lambda: UniformDisk(150.0))
    min_rate: float = 1.5
    max_power: float = 0.1
    circuit_power_per_user: float = 1e-3
    noise_psd: float = -174.0
    rb_bandwidth: float = 180e3
    seed: int = 0

    def __post_init__(self):
        cluster_sizes(self.num_users, self.num_rbs)  # validates U >= M >= 1
        if self.rb_bandwidth <= 0:
            raise ValueError("rb_bandwidth must be positive")
        if self.min_rate < 0 or self.max_power <= 0 or self.circuit_power_per_user < 0:
            raise ValueError("min_rate >= 0, max_power > 0 and circuit power >= 0 required")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def noise_power(self) -> float:
        return noise_power(self.noise_psd, self.rb_bandwidth)

    def to_dict(self) -> dict:
        return {"num_users": self.num_users, "num_rbs": self.num_rbs,
                "placement": self.placement.to_dict(), "min_rate": self.min_rate,
                "max_power": self.max_power, "circuit_power_per_user": self.circuit_power_per_user,
                "noise_psd": self.noise_psd, "rb_bandwidth": self.rb_bandwidth, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "placement" in d:
            d["placement"] = placement_from_dict(d["placement"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Scenario:
    """Gains of every user on every RB plus the per-user constraints."""

    gains: np.ndarray          # U x M linear power gains
    cluster_sizes: np.ndarray  # length M
    min_rates: np.ndarray      # length U
    max_powers: np.ndarray     # length U, watts
    circuit_power_per_user: float
    noise_power: float
    distances: np.ndarray | None = None

    def __post_init__(self):
        gains = np.array(self.gains, dtype=float)
        if gains.ndim != 2 or np.any(gains <= 0):
            raise ValueError("gains must be a U x M matrix of positive values")
        u, m = gains.shape
        sizes = np.array(self.cluster_sizes, dtype=int)
        if sizes.shape != (m,) or sizes.sum() != u or np.any(sizes < 1):
            raise ValueError(f"cluster sizes {sizes.tolist()} do not split {u} users over {m} RBs")
        k = -(-u // m)
        if np.any((sizes != k) & (sizes != k - 1)):
            raise ValueError(f"cluster sizes must be {k} or {k - 1}")
        arrays = {"gains": gains, "cluster_sizes": sizes,
                  "min_rates": np.broadcast_to(np.asarray(self.min_rates, float), (u,)).copy(),
                  "max_powers": np.broadcast_to(np.asarray(self.max_powers, float), (u,)).copy()}
        if self.distances is not None:
            arrays["distances"] = np.asarray(self.distances, float).copy()
        for name, arr in arrays.items():
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def num_users(self) -> int:
        return self.gains.shape[0]

    @property
    def num_rbs(self) -> int:
        return self.gains.shape[1]

    def with_max_power(self, max_power) -> "Scenario":
        return replace(self, max_powers=np.broadcast_to(np.asarray(max_power, float), (self.num_users,)))

    def cluster(self, rb: int, members) -> tuple[ClusterInstance, np.ndarray]:
        """Cluster instance of ``members`` on ``rb`` and the members in its (descending gain) order."""
        members = np.asarray(members, dtype=int)
        g = self.gains[members, rb]
        idx = np.argsort(-g, kind="stable")
        ordered = members[idx]
        inst = ClusterInstance(g[idx], self.min_rates[ordered], self.max_powers[ordered],
                               self.circuit_power_per_user * len(members), self.noise_power)
        return inst, ordered

    def to_dict(self) -> dict:
        d = {"gains": self.gains.tolist(), "cluster_sizes": self.cluster_sizes.tolist(),
             "min_rates": self.min_rates.tolist(), "max_powers": self.max_powers.tolist(),
             "circuit_power_per_user": self.circuit_power_per_user, "noise_power": self.noise_power}
        if self.distances is not None:
            d["distances"] = self.distances.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


#: stream indices keep scenario draws and algorithmic randomness apart
SCENARIO_STREAM = 0
MATCHING_STREAM = 1


def trial_rng(seed: int, trial: int = 0, stream: int = SCENARIO_STREAM) -> np.random.Generator:
    """Independent generator for one trial (and one purpose) of an ensemble."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial, stream])))


def rayleigh_power(rng: np.random.Generator, shape) -> np.ndarray:
    """``|g|^2`` for ``g ~ CN(0, 1)``: unit-mean exponential."""
    z = rng.standard_normal((*np.atleast_1d(shape), 2))
    return 0.5 * (z**2).sum(axis=-1)


def draw_scenario(config: ScenarioConfig, trial: int = 0) -> Scenario:
    """Place users, then draw one fading gain per (user, RB)."""
    rng = trial_rng(config.seed, trial)
    u, m = config.num_users, config.num_rbs
    d_m = config.placement.distances(u, rng)
    path = 10.0 ** (-pathloss_db(d_m / 1000.0) / 10.0)
    gains = path[:, None] * rayleigh_power(rng, (u, m))
    return Scenario(gains, cluster_sizes(u, m), np.full(u, config.min_rate),
                    np.full(u, config.max_power), config.circuit_power_per_user,
                    config.noise_power, distances=d_m)
