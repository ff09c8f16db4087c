"""Command-line experiment driver.

Every command reads a JSON config (``--config``) and writes CSV to ``--out``
or stdout.  The row-producing functions are importable on their own, so the
same experiments can be run from Python without going through argparse.

Exit status: 0 on success, 2 on a malformed command line or config, 3 when
``verify`` finds a gap above tolerance.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import two_user
from .channel import (ScenarioConfig, UniformDisk, dbm_to_watt, draw_scenario, noise_power,
                      pathloss_db, placement_from_dict, rayleigh_power, trial_rng)
from .cluster import ClusterInstance, maximize_ee, maximize_se, min_powers
from .matching import SCHEMES, run_scheme
from .oma import oma_maximize_ee
from .oracle import MatchingBudgetExceeded, exhaustive_matching, grid_search_ee

EXIT_OK, EXIT_PARSE, EXIT_VERIFY = 0, 2, 3

CLUSTER_SCHEMES = ("MaxEE-NOMA", "MaxSE-NOMA", "MaxEE-OMA", "CaseI", "CaseII")


class ConfigError(ValueError):
    pass


def pmax_grid(pmax_dbm_range) -> np.ndarray:
    """Inclusive dBm grid from ``(start, stop, step)``."""
    try:
        start, stop, step = (float(x) for x in pmax_dbm_range)
    except (TypeError, ValueError) as exc:
        raise ConfigError("pmax_dbm_range must be [start, stop, step]") from exc
    if step <= 0 or stop < start:
        raise ConfigError("pmax_dbm_range needs step > 0 and stop >= start")
    return np.round(np.arange(start, stop + step / 2, step), 10)


def _from_dict(cls, d: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# single-cluster sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepConfig:
    pmax_dbm_range: tuple = (-10.0, 30.0, 2.0)
    gains: list | None = None
    num_users: int = 3
    radius: float = 150.0
    seed: int = 0
    schemes: list = field(default_factory=lambda: ["MaxEE-NOMA", "MaxSE-NOMA", "MaxEE-OMA"])
    min_rate: float = 1.5
    circuit_power_per_user: float = 1e-3
    noise_psd: float = -174.0
    rb_bandwidth: float = 180e3

    def __post_init__(self):
        pmax_grid(self.pmax_dbm_range)
        if not self.schemes:
            raise ConfigError("scheme list must not be empty")
        bad = set(self.schemes) - set(CLUSTER_SCHEMES)
        if bad:
            raise ConfigError(f"unknown schemes {sorted(bad)}; expected {CLUSTER_SCHEMES}")

    def resolved_gains(self) -> np.ndarray:
        """Fixed gains if given, otherwise one RB's gains drawn from the seed."""
        if self.gains is not None:
            return np.sort(np.asarray(self.gains, dtype=float))[::-1]
        cfg = ScenarioConfig(num_users=self.num_users, num_rbs=1, placement=UniformDisk(self.radius),
                             seed=self.seed)
        return np.sort(draw_scenario(cfg).gains[:, 0])[::-1]

    def instance(self, pmax_w: float) -> ClusterInstance:
        g = self.resolved_gains()
        return ClusterInstance(g, self.min_rate, pmax_w, self.circuit_power_per_user * g.size,
                               noise_power(self.noise_psd, self.rb_bandwidth))


def _cluster_solution(scheme: str, inst: ClusterInstance):
    if scheme == "MaxEE-NOMA":
        return maximize_ee(inst)
    if scheme == "MaxSE-NOMA":
        return maximize_se(inst)
    if scheme == "MaxEE-OMA":
        return oma_maximize_ee(inst)
    if inst.size != 2:
        raise ConfigError(f"{scheme} needs exactly two users")
    return two_user.solve_case1(inst) if scheme == "CaseI" else two_user.solve_case2(inst)


def sweep_rows(cfg: SweepConfig) -> tuple[list[str], list[list]]:
    n = cfg.resolved_gains().size
    header = (["pmax_dbm", "scheme", "seed", "feasible", "ee", "sum_rate", "total_power_w", "ee_at_maxse"]
              + [f"p_{i + 1}" for i in range(n)] + [f"pmin_{i + 1}" for i in range(n)])
    rows = []
    for p_dbm in pmax_grid(cfg.pmax_dbm_range):
        inst = cfg.instance(dbm_to_watt(p_dbm))
        pmin = min_powers(inst).powers
        se = maximize_se(inst)
        for scheme in cfg.schemes:
            sol = _cluster_solution(scheme, inst)
            rows.append([float(p_dbm), scheme, cfg.seed, int(sol.feasible), sol.ee, sol.sum_rate,
                         sol.total_power, se.ee] + list(sol.powers) + list(pmin))
    return header, rows


# ---------------------------------------------------------------------------
# two-user phase diagram
# ---------------------------------------------------------------------------

@dataclass
class PhaseConfig:
    gains: list = field(default_factory=lambda: [1.10e-9, 1.34e-10])
    pmax_dbm_range: tuple = (-20.0, 30.0, 1.0)
    min_rate: float = 1.5
    circuit_power_per_user: float = 1e-3
    noise_psd: float = -174.0
    rb_bandwidth: float = 180e3

    def __post_init__(self):
        pmax_grid(self.pmax_dbm_range)
        if len(self.gains) != 2:
            raise ConfigError("phase diagrams need exactly two gains")

    def instance(self, pmax_w: float) -> ClusterInstance:
        g = np.sort(np.asarray(self.gains, float))[::-1]
        return ClusterInstance(g, self.min_rate, pmax_w, 2 * self.circuit_power_per_user,
                               noise_power(self.noise_psd, self.rb_bandwidth))


PHASE_HEADER = ["pmax_dbm", "case", "phase", "dp1", "dp2", "dp3", "dp4", "feasible",
                "p1", "p2", "p1_numeric", "p2_numeric", "max_power_gap_w", "ee", "ee_numeric"]


def phase_rows(cfg: PhaseConfig) -> tuple[list[str], list[list]]:
    """Corner gradients, phase label and analytical-vs-numerical powers per pmax.

    ``dp1``/``dp2`` are dEE/dP1 and dEE/dP2 at (P1max, P2max); ``dp3``/``dp4``
    the same derivatives at (P1max, P2min).
    """
    rows = []
    for p_dbm in pmax_grid(cfg.pmax_dbm_range):
        inst = cfg.instance(dbm_to_watt(p_dbm))
        g = two_user.corner_gradients(inst)
        for case, order, solve, classify in (
                ("CaseI", two_user.CASE_I_ORDER, two_user.solve_case1, two_user.classify_phase_case1),
                ("CaseII", two_user.CASE_II_ORDER, two_user.solve_case2, two_user.classify_phase_case2)):
            feasible = min_powers(inst, order).feasible
            if not feasible:
                rows.append([float(p_dbm), case, "", g.d1_max_max, g.d2_max_max, g.d1_max_min,
                             g.d2_max_min, 0, "", "", "", "", "", 0.0, 0.0])
                continue
            label = classify(inst).phase.name
            sol, num = solve(inst), maximize_ee(inst, order)
            gap = float(np.abs(sol.powers - num.powers).max())
            rows.append([float(p_dbm), case, label, g.d1_max_max, g.d2_max_max, g.d1_max_min,
                         g.d2_max_min, 1, *sol.powers, *num.powers, gap, sol.ee, num.ee])
    return PHASE_HEADER, rows


# ---------------------------------------------------------------------------
# multi-RB ensembles
# ---------------------------------------------------------------------------

@dataclass
class EnsembleConfig:
    trials: int = 1000
    num_users: int = 12
    num_rbs: int = 4
    placement: dict = field(default_factory=lambda: {"type": "uniform-disk", "radius": 150.0})
    schemes: list = field(default_factory=lambda: list(SCHEMES))
    pmax_dbm_range: tuple = (20.0, 20.0, 1.0)
    seed: int = 0
    min_rate: float = 1.5
    circuit_power_per_user: float = 1e-3
    noise_psd: float = -174.0
    rb_bandwidth: float = 180e3

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        pmax_grid(self.pmax_dbm_range)
        bad = set(self.schemes) - set(SCHEMES)
        if bad or not self.schemes:
            raise ConfigError(f"schemes must be a non-empty subset of {SCHEMES}")
        self.scenario_config()

    def scenario_config(self) -> ScenarioConfig:
        try:
            return ScenarioConfig(num_users=self.num_users, num_rbs=self.num_rbs,
                                  placement=placement_from_dict(self.placement),
                                  min_rate=self.min_rate,
                                  circuit_power_per_user=self.circuit_power_per_user,
                                  noise_psd=self.noise_psd, rb_bandwidth=self.rb_bandwidth, seed=self.seed)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario settings: {exc}") from exc


ENSEMBLE_HEADER = ["kind", "pmax_dbm", "scheme", "seed", "trial", "ee", "stderr", "swap_count",
                   "infeasible_rbs", "trials"]


def _run_trial(args) -> list[tuple]:
    cfg, trial = args
    base = draw_scenario(cfg.scenario_config(), trial)
    out = []
    for p_dbm in pmax_grid(cfg.pmax_dbm_range):
        scenario = base.with_max_power(dbm_to_watt(p_dbm))
        for scheme in cfg.schemes:
            sol = run_scheme(scheme, scenario, cfg.seed, trial)
            out.append((float(p_dbm), scheme, sol.system_ee, sol.swap_count, len(sol.infeasible_rbs)))
    return out


def ensemble_rows(cfg: EnsembleConfig, jobs: int = 1) -> tuple[list[str], list[list]]:
    """Per-trial rows followed by per-(pmax, scheme) mean EE with standard error.

    Every scheme of a trial sees the same scenario draw.  Rows come out in
    trial order whatever ``jobs`` is, so the CSV is reproducible.
    """
    work = [(cfg, t) for t in range(cfg.trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial, work, chunksize=max(1, cfg.trials // (4 * jobs))))
    else:
        results = [_run_trial(w) for w in work]
    rows = []
    per_key: dict[tuple, list] = {}
    for trial, res in enumerate(results):
        for p_dbm, scheme, ee, swaps, infeasible in res:
            rows.append(["trial", p_dbm, scheme, cfg.seed, trial, ee, "", swaps, infeasible, 1])
            per_key.setdefault((p_dbm, scheme), []).append((ee, infeasible))
    for (p_dbm, scheme), vals in per_key.items():
        ee = np.array([v[0] for v in vals])
        se = float(ee.std(ddof=1) / np.sqrt(ee.size)) if ee.size > 1 else 0.0
        rows.append(["summary", p_dbm, scheme, cfg.seed, "", float(ee.mean()), se, "",
                     int(sum(v[1] for v in vals)), ee.size])
    return ENSEMBLE_HEADER, rows


# ---------------------------------------------------------------------------
# oracle cross-checks
# ---------------------------------------------------------------------------

@dataclass
class VerifyConfig:
    scope: str = "all"
    trials: int = 20
    seed: int = 0
    cluster_tol: float = 1e-4
    matching_users: int = 4
    matching_rbs: int = 2

    def __post_init__(self):
        if self.scope not in ("cluster", "matching", "all"):
            raise ConfigError("scope must be cluster, matching or all")


def random_cluster(rng: np.random.Generator, size: int) -> ClusterInstance:
    """A random cluster with 150 m uniform-disk gains and a random common cap and target."""
    d_m = UniformDisk(150.0).distances(size, rng)
    g = 10.0 ** (-pathloss_db(d_m / 1000.0) / 10.0) * rayleigh_power(rng, size)
    return ClusterInstance(np.sort(g)[::-1], rng.uniform(0.0, 2.0), dbm_to_watt(rng.uniform(-10, 30)),
                           1e-3 * size, noise_power(-174.0, 180e3))


def verify_cluster(cfg: VerifyConfig) -> tuple[list[str], bool]:
    rng = trial_rng(cfg.seed, 0)
    lines, worst, done = [], 0.0, 0
    while done < cfg.trials:
        inst = random_cluster(rng, int(rng.integers(2, 4)))
        if not min_powers(inst).feasible:
            continue
        fast, grid = maximize_ee(inst), grid_search_ee(inst)
        gap = abs(fast.ee - grid.ee) / grid.ee
        worst = max(worst, gap)
        lines.append(f"cluster trial {done}: L={inst.size} ee={fast.ee:.6g} grid={grid.ee:.6g} gap={gap:.2e}")
        done += 1
    ok = worst <= cfg.cluster_tol
    lines.append(f"cluster: worst relative gap {worst:.3e} (tolerance {cfg.cluster_tol:.0e}) "
                 f"{'PASS' if ok else 'FAIL'}")
    return lines, ok


def verify_matching(cfg: VerifyConfig) -> tuple[list[str], bool]:
    scfg = ScenarioConfig(num_users=cfg.matching_users, num_rbs=cfg.matching_rbs, seed=cfg.seed)
    lines, ratios, ok = [], [], True
    for t in range(cfg.trials):
        scenario = draw_scenario(scfg, t)
        try:
            best = exhaustive_matching(scenario)
        except MatchingBudgetExceeded as exc:
            return [f"matching: {exc}"], False
        swap = run_scheme("HMA-prop", scenario, cfg.seed, t)
        ratio = swap.system_ee / best.system_ee if best.system_ee > 0 else 1.0
        ok &= swap.system_ee <= best.system_ee * (1 + 1e-9)
        ratios.append(ratio)
        lines.append(f"matching trial {t}: swap={swap.system_ee:.6g} optimum={best.system_ee:.6g} "
                     f"ratio={ratio:.4f}")
    lines.append(f"matching: mean ratio {np.mean(ratios):.4f}, min {np.min(ratios):.4f}; "
                 f"oracle dominance {'PASS' if ok else 'FAIL'}")
    return lines, ok


def verify(cfg: VerifyConfig) -> tuple[list[str], bool]:
    lines, ok = [], True
    if cfg.scope in ("cluster", "all"):
        part, good = verify_cluster(cfg)
        lines += part
        ok &= good
    if cfg.scope in ("matching", "all"):
        part, good = verify_matching(cfg)
        lines += part
        ok &= good
    return lines, ok


# ---------------------------------------------------------------------------
# feasibility report
# ---------------------------------------------------------------------------

def feasibility_report(inst: ClusterInstance) -> tuple[list[str], bool]:
    rep = min_powers(inst)
    lines = [f"user {i + 1}: p_min={pmin:.6e} W p_max={pmax:.6e} W margin={m:.6e} W"
             for i, (pmin, pmax, m) in enumerate(zip(rep.powers, inst.max_powers, rep.margins))]
    if rep.feasible:
        lines.append("verdict: feasible")
    else:
        lines.append(f"verdict: infeasible (user {rep.first_violation + 1})")
    return lines, rep.feasible


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

def _load_json(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        lines = text.splitlines()
        context = lines[exc.lineno - 1] if 0 < exc.lineno <= len(lines) else ""
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}\n    {context}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return data


def _write_csv(header, rows, out: str | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    if out is None:
        sys.stdout.write(buf.getvalue())
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())


def _write_lines(lines, out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noma-ee", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="JSON config file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--seed", type=int, help="override the config seed")
        return p

    common(sub.add_parser("feasibility", help="minimum powers and verdict for one cluster"), True)
    common(sub.add_parser("sweep", help="single-cluster EE versus maximum power"))
    common(sub.add_parser("phase", help="two-user phase diagram and analytical powers"))
    ens = common(sub.add_parser("ensemble", help="multi-RB association schemes over random trials"))
    ens.add_argument("--trials", type=int)
    ens.add_argument("--quick", action="store_true", help="50 trials")
    ens.add_argument("--jobs", type=int, default=1, help="worker processes")
    ver = common(sub.add_parser("verify", help="oracle cross-checks"))
    ver.add_argument("--scope", choices=["cluster", "matching", "all"])
    ver.add_argument("--trials", type=int)
    ver.add_argument("--quick", action="store_true", help="5 trials per scope")
    return parser


def run(args: argparse.Namespace) -> int:
    data = _load_json(args.config)
    if args.command == "feasibility":
        try:
            inst = ClusterInstance.from_dict(data)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{args.config}: not a cluster instance: {exc}") from exc
        lines, _ = feasibility_report(inst)
        _write_lines(lines, args.out)
        return EXIT_OK
    if args.seed is not None:
        data["seed"] = args.seed
    if args.command == "sweep":
        _write_csv(*sweep_rows(_from_dict(SweepConfig, data)), args.out)
    elif args.command == "phase":
        data.pop("seed", None)
        _write_csv(*phase_rows(_from_dict(PhaseConfig, data)), args.out)
    elif args.command == "ensemble":
        if args.quick:
            data["trials"] = 50
        if args.trials is not None:
            data["trials"] = args.trials
        _write_csv(*ensemble_rows(_from_dict(EnsembleConfig, data), jobs=max(1, args.jobs)), args.out)
    elif args.command == "verify":
        if args.scope:
            data["scope"] = args.scope
        if args.quick:
            data["trials"] = 5
        if args.trials is not None:
            data["trials"] = args.trials
        lines, ok = verify(_from_dict(VerifyConfig, data))
        _write_lines(lines, args.out)
        return EXIT_OK if ok else EXIT_VERIFY
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on bad arguments
    try:
        return run(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
