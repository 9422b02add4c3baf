"""Scenario x policy x k x seed sweeps, aggregation and result files.

Every seed's workload is generated once and shared by all of its cells.
Cells of one seed are solved in a fixed order so that each can be warm
started from assignments that are provably feasible for it:

* the same scenario and policy at the previous ``k`` (package sets are
  nested in ``k``),
* the next smaller scenario at the same ``k`` (vehicle ``j`` holds the same
  packages whatever the fleet size, and fog servers and cloud are shared).

The solver never returns anything worse than its best warm start, so the
per-seed curves are non-increasing in ``k`` and ordered across scenarios
even when the search stops on its node budget.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Mapping, Sequence

from .deployment import POLICIES, RANDOM_TYPE, SAME_TYPE, Deployment, make_deployment
from .model import SCENARIO_NAMES, TIERS, Catalog, ModelError, NodeRef, Scenario, Tier, default_catalog
from .optimizer import SolveLimits, SolveReport, solve_exact
from .workload import WorkloadConfig, generate_requests

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
# budgets for the many mid-sized solves of a sweep; see README for the trade-off
SWEEP_LIMITS = SolveLimits(time_limit=60.0, node_limit=25, search_rounds=12)


@dataclass(frozen=True)
class SweepConfig:
    scenarios: tuple[str, ...] = SCENARIO_NAMES
    policies: tuple[str, ...] = POLICIES
    k_values: tuple[int, ...] = tuple(range(1, 11))
    seeds: tuple[int, ...] = tuple(range(20))
    workload: WorkloadConfig = WorkloadConfig()
    catalog_overrides: Mapping = field(default_factory=dict)
    scenario_overrides: Mapping = field(default_factory=dict)
    limits: SolveLimits = SWEEP_LIMITS
    workers: int = 1
    plateau_tolerance: float = 0.002
    out_dir: str = "results"

    def validate(self) -> None:
        if not self.scenarios:
            raise ModelError("scenario list is empty")
        for name in self.scenarios:
            if name not in SCENARIO_NAMES:
                raise ModelError(f"unknown scenario {name!r}")
        if len(set(self.scenarios)) != len(self.scenarios):
            raise ModelError("duplicate scenarios")
        if not self.policies or any(p not in POLICIES for p in self.policies):
            raise ModelError(f"policies must be a non-empty subset of {POLICIES}")
        if not self.k_values or any(not 1 <= k <= self.workload.n_packages for k in self.k_values):
            raise ModelError(f"k values must lie in 1..{self.workload.n_packages}")
        if not self.seeds:
            raise ModelError("at least one seed is required")
        if self.workers < 1:
            raise ModelError("workers must be >= 1")
        self.workload.validate()

    def catalog(self) -> Catalog:
        return default_catalog().with_overrides(self.catalog_overrides)

    def scenario(self, name: str) -> Scenario:
        over = dict(self.scenario_overrides)
        if "enforce" in over and over["enforce"] is not None:
            over["enforce"] = frozenset(over["enforce"])
        if name == "Cloud":
            over.pop("fog_server_count", None)
        return Scenario.named(name, **over)

    def to_dict(self) -> dict:
        return {
            "scenarios": list(self.scenarios),
            "policies": list(self.policies),
            "k_values": list(self.k_values),
            "seeds": list(self.seeds),
            "workload": self.workload.to_dict(),
            "catalog_overrides": json.loads(json.dumps(self.catalog_overrides, sort_keys=True)),
            "scenario_overrides": json.loads(json.dumps(self.scenario_overrides, sort_keys=True, default=sorted)),
            "limits": {
                "time_limit": self.limits.time_limit,
                "node_limit": self.limits.node_limit,
                "search_rounds": self.limits.search_rounds,
                "search_seed": self.limits.search_seed,
            },
            "plateau_tolerance": self.plateau_tolerance,
        }


@dataclass
class Cell:
    seed: int
    scenario: str
    policy: str
    k: int
    report: SolveReport | None = None
    error: str | None = None

    @property
    def key(self) -> tuple:
        return (self.seed, self.scenario, self.policy, self.k)

    def to_dict(self) -> dict:
        d = {"seed": self.seed, "scenario": self.scenario, "policy": self.policy, "k": self.k}
        if self.report is None:
            d["error"] = self.error
            return d
        r = self.report
        vehicles = sorted((n for n in r.cpu_utilization if n.tier is Tier.VF), key=NodeRef.sort_key)
        d.update(
            total_W=r.objective_W,
            power=r.breakdown.to_dict(),
            tier_counts={t.value: r.tier_counts.get(t, 0) for t in TIERS},
            vehicle_utilization=[r.cpu_utilization[n] for n in vehicles],
            proved_optimal=r.proved_optimal,
            gap_W=r.gap_W,
            status=r.status,
            nodes_explored=r.nodes_explored,
            assignment=[[n.tier.value, n.index] for _, n in sorted(r.assignment.items())],
        )
        return d


def _vf_names(cfg: SweepConfig) -> list[str]:
    named = [cfg.scenario(n) for n in cfg.scenarios]
    return [s.name for s in sorted((s for s in named if s.vehicle_count), key=lambda s: (s.vehicle_count, s.name))]


def _solve_seed(cfg: SweepConfig, seed: int) -> list[Cell]:
    """All cells of one seed, in a dependency order that allows warm starts."""
    catalog = cfg.catalog()
    requests = generate_requests(seed, cfg.workload)
    n_pkg = cfg.workload.n_packages
    cells: dict[tuple, Cell] = {}

    def solve(name, policy, k, deployment, warm):
        cell = Cell(seed, name, policy, k)
        try:
            cell.report = solve_exact(requests, cfg.scenario(name), deployment, catalog, cfg.limits, warm)
        except ModelError as exc:
            cell.error = f"{type(exc).__name__}: {exc}"
            log.warning("seed %s %s %s k=%s failed: %s", seed, name, policy, k, cell.error)
        return cell

    def assignment(cell):
        return [cell.report.assignment] if cell is not None and cell.report is not None else []

    # deployment-free baselines: one solve each, replicated over policies and k
    fixed = {}
    prev = []
    for name in ("Cloud", "CloudFog"):
        if name in cfg.scenarios:
            c = solve(name, "-", 0, Deployment((), 1, n_pkg, "none"), prev)
            fixed[name] = c
            prev = assignment(c)
    base_warm = prev

    ks = sorted(set(cfg.k_values))
    vf = _vf_names(cfg)
    policies = [p for p in POLICIES if p in cfg.policies]
    solved: dict[tuple, Cell] = {}
    for pos, k in enumerate(ks):
        for vpos, name in enumerate(vf):
            vehicles = cfg.scenario(name).vehicle_count
            smaller = vf[vpos - 1] if vpos else None
            for policy in policies:
                if k == n_pkg:
                    # every policy gives every vehicle all packages: pool the
                    # warm starts so all policies see the very same input
                    srcs = policies
                else:
                    srcs = [policy]
                warm = []
                for p in srcs:
                    if pos:
                        warm += assignment(solved.get((name, p, ks[pos - 1])))
                    if smaller is not None:
                        warm += assignment(solved.get((smaller, p, k)))
                if smaller is None:
                    warm += base_warm
                dep = make_deployment(policy, vehicles, k, seed, n_pkg)
                solved[(name, policy, k)] = solve(name, policy, k, dep, warm)

    for name in cfg.scenarios:
        for policy in policies:
            for k in ks:
                if name in fixed:
                    src = fixed[name]
                    cell = Cell(seed, name, policy, k, src.report, src.error)
                else:
                    cell = solved[(name, policy, k)]
                cells[cell.key] = cell
    return [cells[key] for key in sorted(cells)]


@dataclass
class SweepResult:
    config: SweepConfig
    cells: list[Cell]

    def ok_cells(self):
        return [c for c in self.cells if c.report is not None]

    def mean_power(self) -> dict[tuple[str, str, int], float]:
        groups: dict[tuple, list[float]] = {}
        for c in self.ok_cells():
            groups.setdefault((c.scenario, c.policy, c.k), []).append(c.report.objective_W)
        return {key: fmean(v) for key, v in sorted(groups.items())}

    def means(self) -> list[dict]:
        """Seed-averaged rows, one per (scenario, policy, k)."""
        groups: dict[tuple, list[Cell]] = {}
        for c in self.ok_cells():
            groups.setdefault((c.scenario, c.policy, c.k), []).append(c)
        rows = []
        for (name, policy, k), cs in sorted(groups.items(), key=lambda kv: _cell_order(kv[0])):
            reps = [c.report for c in cs]
            row = {
                "scenario": name,
                "policy": policy,
                "k": k,
                "seeds": len(cs),
                "total_W": fmean(r.objective_W for r in reps),
            }
            for t in TIERS:
                for part in ("processing_W", "networking_W", "storage_W"):
                    row[f"{t.value}.{part}"] = fmean(getattr(r.breakdown.tier(t), part) for r in reps)
            for t in TIERS:
                row[f"{t.value}.requests"] = fmean(r.tier_counts.get(t, 0) for r in reps)
            utils = [u for r in reps for n, u in r.cpu_utilization.items() if n.tier is Tier.VF]
            row["vehicle_utilization"] = fmean(utils) if utils else 0.0
            row["proved_optimal"] = sum(r.proved_optimal for r in reps)
            row["max_gap_W"] = max(r.gap_W for r in reps)
            rows.append(row)
        return rows

    def savings(self) -> list[dict]:
        """Per-k savings of each scenario vs Cloud and vs CloudFog, averaged over seeds."""
        power = {c.key: c.report.objective_W for c in self.ok_cells()}
        rows = []
        keys = sorted({(c.scenario, c.policy, c.k) for c in self.ok_cells()}, key=_cell_order)
        for name, policy, k in keys:
            row = {"scenario": name, "policy": policy, "k": k}
            for ref in ("Cloud", "CloudFog"):
                vals = []
                for seed in self.config.seeds:
                    p_ref = power.get((seed, ref, policy, k))
                    p = power.get((seed, name, policy, k))
                    if p_ref is not None and p is not None and p_ref > 0:
                        vals.append((p_ref - p) / p_ref)
                row[f"vs_{ref}_pct"] = 100.0 * fmean(vals) if vals else None
            rows.append(row)
        return rows

    def savings_summary(self) -> dict:
        """k-averaged savings and the extra saving of random-type over same-type.

        The extra saving is given two ways per VF scenario and k: the
        difference of the savings vs Cloud in percentage points, and the
        relative reduction of mean power from same-type to random-type.
        """
        per_k = self.savings()
        by = {(r["scenario"], r["policy"], r["k"]): r for r in per_k}
        summary = {"k_averaged": [], "random_minus_same": [], "max_random_minus_same": {}}
        for name in self.config.scenarios:
            for policy in self.config.policies:
                rows = [r for key, r in by.items() if key[0] == name and key[1] == policy]
                if not rows:
                    continue
                entry = {"scenario": name, "policy": policy}
                for ref in ("Cloud", "CloudFog"):
                    vals = [r[f"vs_{ref}_pct"] for r in rows if r[f"vs_{ref}_pct"] is not None]
                    entry[f"vs_{ref}_pct"] = fmean(vals) if vals else None
                summary["k_averaged"].append(entry)
        if SAME_TYPE not in self.config.policies or RANDOM_TYPE not in self.config.policies:
            return summary
        power = self.mean_power()
        for name in _vf_names(self.config):
            rows = []
            for k in sorted(set(self.config.k_values)):
                a, b = by.get((name, RANDOM_TYPE, k)), by.get((name, SAME_TYPE, k))
                if a is None or b is None or a["vs_Cloud_pct"] is None or b["vs_Cloud_pct"] is None:
                    continue
                same, rand = power[(name, SAME_TYPE, k)], power[(name, RANDOM_TYPE, k)]
                rows.append(
                    {
                        "scenario": name,
                        "k": k,
                        "vs_Cloud_pp": a["vs_Cloud_pct"] - b["vs_Cloud_pct"],
                        "power_reduction_pct": 100.0 * (same - rand) / same,
                    }
                )
            summary["random_minus_same"] += rows
            if rows:
                summary["max_random_minus_same"][name] = {
                    "vs_Cloud_pp": max(r["vs_Cloud_pp"] for r in rows),
                    "power_reduction_pct": max(r["power_reduction_pct"] for r in rows),
                }
        return summary

    def shape(self) -> list[dict]:
        """Plateau / minimum points of each VF curve.

        ``k_star`` is the smallest k whose mean power is within
        ``plateau_tolerance`` (relative) of the curve's lowest value.
        """
        tol = self.config.plateau_tolerance
        means = {(r["scenario"], r["policy"], r["k"]): r for r in self.means()}
        out = []
        for name in _vf_names(self.config):
            for policy in self.config.policies:
                curve = sorted((k, r) for (n, p, k), r in means.items() if n == name and p == policy)
                if not curve:
                    continue
                low = min(r["total_W"] for _, r in curve)
                k_star, row = next((k, r) for k, r in curve if r["total_W"] <= low * (1 + tol))
                out.append(
                    {
                        "scenario": name,
                        "policy": policy,
                        "k_star": k_star,
                        "power_at_k_star_W": row["total_W"],
                        "vehicle_utilization_at_k_star": row["vehicle_utilization"],
                    }
                )
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "cells": [c.to_dict() for c in self.cells],
            "means": self.means(),
            "savings_by_k": self.savings(),
            "savings_summary": self.savings_summary(),
            "shape": self.shape(),
        }


def _cell_order(key):
    name, policy, k = key
    return (SCENARIO_NAMES.index(name), POLICIES.index(policy) if policy in POLICIES else -1, k)


def _solve_seed_job(args):
    return _solve_seed(*args)


def run_sweep(cfg: SweepConfig) -> SweepResult:
    cfg.validate()
    seeds = list(dict.fromkeys(cfg.seeds))
    if cfg.workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            per_seed = list(pool.map(_solve_seed_job, [(cfg, s) for s in seeds]))
    else:
        per_seed = [_solve_seed(cfg, s) for s in seeds]
    cells = sorted((c for cs in per_seed for c in cs), key=lambda c: (c.seed, _cell_order((c.scenario, c.policy, c.k))))
    if not any(c.report is not None for c in cells):
        raise ModelError("every sweep cell failed")
    return SweepResult(cfg, cells)


# --------------------------------------------------------------------------
# files

CSV_FLOAT = "{:.6f}"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return CSV_FLOAT.format(v)
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def emit_results(result: SweepResult, out_dir: str | Path | None = None) -> list[Path]:
    """Write the full results file and the plot-ready tables; returns the paths written."""
    out = Path(out_dir or result.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    doc = result.to_dict()

    p = out / "results.json"
    p.write_text(json.dumps(doc, indent=1, allow_nan=False) + "\n")
    written.append(p)

    means = {(r["scenario"], r["policy"], r["k"]): r for r in doc["means"]}
    ks = sorted(set(result.config.k_values))
    names = list(result.config.scenarios)
    for policy in result.config.policies:
        p = out / f"power_vs_k_{policy}.csv"
        rows = [[k] + [means.get((n, policy, k), {}).get("total_W") for n in names] for k in ks]
        _write_csv(p, ["k"] + names, rows)
        written.append(p)

        p = out / f"allocation_{policy}.csv"
        rows = []
        for n in names:
            for k in ks:
                m = means.get((n, policy, k))
                if m is not None:
                    rows.append([n, k] + [m[f"{t.value}.requests"] for t in TIERS])
        _write_csv(p, ["scenario", "k"] + [t.value for t in TIERS], rows)
        written.append(p)

    p = out / "savings_by_k.csv"
    _write_csv(
        p,
        ["scenario", "policy", "k", "vs_Cloud_pct", "vs_CloudFog_pct"],
        [[r["scenario"], r["policy"], r["k"], r["vs_Cloud_pct"], r["vs_CloudFog_pct"]] for r in doc["savings_by_k"]],
    )
    written.append(p)

    p = out / "savings.csv"
    s = doc["savings_summary"]
    rows = [[e["scenario"], e["policy"], e["vs_Cloud_pct"], e["vs_CloudFog_pct"]] for e in s["k_averaged"]]
    _write_csv(p, ["scenario", "policy", "k_averaged_vs_Cloud_pct", "k_averaged_vs_CloudFog_pct"], rows)
    written.append(p)

    if s["random_minus_same"]:
        p = out / "random_vs_same.csv"
        _write_csv(
            p,
            ["scenario", "k", "extra_saving_vs_Cloud_pp", "power_reduction_pct"],
            [[r["scenario"], r["k"], r["vs_Cloud_pp"], r["power_reduction_pct"]] for r in s["random_minus_same"]],
        )
        written.append(p)
    return written


def small_instance(seed: int, max_requests: int = 6, max_nodes: int = 4):
    """A random instance small enough for exhaustive enumeration.

    Few packages and a shrunken fog server make the package and capacity
    constraints bind even with a handful of requests.  Returns
    ``(requests, scenario, deployment, catalog)``.
    """
    rng = random.Random(seed)
    n_packages = rng.randint(1, 4)
    n = rng.randint(1, max_requests)
    vehicles = rng.randint(0, max_nodes - 1)
    cloud = rng.random() < 0.85 or vehicles == 0
    fog = rng.randint(0 if vehicles else 1, max_nodes - vehicles - (1 if cloud else 0))
    if vehicles + fog == 0:
        cloud = True
    k = rng.randint(1, n_packages)
    catalog = default_catalog().with_overrides(
        {"nodes": {"fog_server": {"cpu_capacity": rng.uniform(250.0, 900.0), "storage_capacity": rng.uniform(300.0, 2000.0)}}}
    )
    requests = generate_requests(seed, WorkloadConfig(n_requests=n, n_packages=n_packages))
    scenario = Scenario(name="custom", vehicle_count=vehicles, fog_server_count=fog, cloud_enabled=cloud)
    deployment = make_deployment(RANDOM_TYPE if rng.random() < 0.5 else SAME_TYPE, vehicles, k, seed, n_packages)
    return requests, scenario, deployment, catalog
