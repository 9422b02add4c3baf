"""Command line entry point: ``vfogmatch {sweep,solve,oracle-check,catalog}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, config_from_dict, load_config
from .deployment import POLICIES, SAME_TYPE, Deployment, make_deployment
from .harness import SweepConfig, emit_results, run_sweep, small_instance
from .model import SCENARIO_NAMES, TIER_ROLE, TIERS, ModelError, validate_scenario
from .optimizer import (
    Infeasible,
    SolveLimits,
    SolveReport,
    assignment_from_list,
    brute_force_oracle,
    greedy_baseline,
    solve_exact,
)
from .validator import Violation, check_assignment, check_sweep, recompute_power, relative_difference
from .workload import generate_requests

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2

log = logging.getLogger("vfogmatch")


def _int_list(spec: str) -> tuple[int, ...]:
    """``"0-19"``, ``"1,3,5"`` or ``"2"``."""
    out: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty list {spec!r}")
    return tuple(out)


def _base_config(args) -> SweepConfig:
    cfg = load_config(args.config) if args.config else SweepConfig()
    if getattr(args, "time_limit", None) is not None:
        cfg = replace(cfg, limits=replace(cfg.limits, time_limit=args.time_limit))
    return cfg


def _print_violations(violations) -> None:
    for v in violations:
        print(f"VIOLATION {v}", file=sys.stderr)


# --------------------------------------------------------------------------


def cmd_catalog(args) -> int:
    cfg = _base_config(args)
    catalog = cfg.catalog()
    if args.json:
        print(json.dumps(catalog.to_dict(), indent=2))
        return EXIT_OK
    print(f"{'entry':<22}{'capacity':>18} {'unit':<6}{'max power (W)':>16}")
    for entry, cap, unit, power in catalog.rows():
        print(f"{entry:<22}{cap:>18.6g} {unit:<6}{power:>16.6g}")
    scenario = cfg.scenario("CloudFogVF1")
    paths = validate_scenario(scenario, catalog).build_paths(catalog)
    print()
    print(f"{'tier':<10}{'W/MHz':>12}{'W/Mbps':>12}{'W/MB':>14}")
    for t in TIERS:
        spec = catalog.node(TIER_ROLE[t])
        print(
            f"{t.value:<10}{spec.cpu_max_power / spec.cpu_capacity:>12.6g}"
            f"{paths[t].watts_per_mbps:>12.6g}{spec.storage_max_power / spec.storage_capacity:>14.6g}"
        )
    return EXIT_OK


def _instance(args, cfg: SweepConfig):
    requests = generate_requests(args.seed, cfg.workload)
    scenario = cfg.scenario(args.scenario)
    deployment = make_deployment(args.policy, scenario.vehicle_count, args.k, args.seed, cfg.workload.n_packages)
    return requests, scenario, deployment


def _check_solution(requests, scenario, deployment, catalog, report: SolveReport) -> list:
    violations = check_assignment(report.assignment, requests, scenario, deployment, catalog)
    if not violations:
        again = recompute_power(report.assignment, requests, scenario, catalog).total_W
        if relative_difference(again, report.objective_W) > 1e-9:
            violations.append(Violation("PowerMismatch", None, None, f"recomputed {again!r} W vs reported {report.objective_W!r} W"))
    return violations


def cmd_solve(args) -> int:
    if args.check:
        doc = json.loads(Path(args.check).read_text())
        inst = doc["instance"]
        args.seed, args.scenario, args.policy, args.k = inst["seed"], inst["scenario"], inst["policy"], inst["k"]
    cfg = _base_config(args)
    catalog = cfg.catalog()
    requests, scenario, deployment = _instance(args, cfg)

    if args.check:
        report = SolveReport.from_dict(doc["report"])
    else:
        limits = replace(cfg.limits, **{k: v for k, v in (("node_limit", args.node_limit), ("search_rounds", args.search_rounds)) if v is not None})
        if args.time_limit is None and args.node_limit is None:
            limits = replace(limits, node_limit=SolveLimits().node_limit, time_limit=SolveLimits().time_limit)
        t0 = time.monotonic()
        try:
            if args.greedy:
                report = greedy_baseline(requests, scenario, deployment, catalog)
            else:
                report = solve_exact(requests, scenario, deployment, catalog, limits)
        except Infeasible as exc:
            print(f"infeasible: {exc}", file=sys.stderr)
            return EXIT_VIOLATION
        log.info("solved in %.2f s", time.monotonic() - t0)

    violations = _check_solution(requests, scenario, deployment, catalog, report)
    if not args.check:
        doc = {
            "schema_version": 1,
            "instance": {"seed": args.seed, "scenario": args.scenario, "policy": args.policy, "k": args.k},
            "report": report.to_dict(),
        }
        text = json.dumps(doc, indent=1) + "\n"
        if args.out:
            Path(args.out).write_text(text)
        else:
            sys.stdout.write(text)
    _print_violations(violations)
    counts = ", ".join(f"{t.value} {report.tier_counts.get(t, 0)}" for t in TIERS)
    print(
        f"{args.scenario} {args.policy} k={args.k} seed={args.seed}: {report.objective_W:.6f} W "
        f"({report.status}, gap {report.gap_W:.6g} W; {counts})",
        file=sys.stderr,
    )
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _base_config(args)
    if args.check:
        doc = json.loads(Path(args.check).read_text())
        violations = check_sweep(doc)
        violations += _check_sweep_cells(doc)
        _print_violations(violations)
        print(f"{len(doc['cells'])} cells checked, {len(violations)} violations", file=sys.stderr)
        return EXIT_VIOLATION if violations else EXIT_OK

    fields = {}
    if args.seeds:
        fields["seeds"] = args.seeds
    if args.k:
        fields["k_values"] = args.k
    if args.scenario:
        fields["scenarios"] = tuple(n for n in SCENARIO_NAMES if n in args.scenario)
    if args.policy:
        fields["policies"] = tuple(p for p in POLICIES if p in args.policy)
    if args.workers:
        fields["workers"] = args.workers
    if args.out:
        fields["out_dir"] = args.out
    cfg = replace(cfg, **fields)

    t0 = time.monotonic()
    result = run_sweep(cfg)
    paths = emit_results(result)
    elapsed = time.monotonic() - t0
    doc = json.loads(paths[0].read_text())
    violations = check_sweep(doc)
    _print_violations(violations)
    failed = sum(c.report is None for c in result.cells)
    print(f"{len(result.cells)} cells ({failed} failed) in {elapsed:.1f} s; wrote {len(paths)} files to {cfg.out_dir}", file=sys.stderr)
    for row in doc["shape"]:
        print(f"  {row['scenario']:<12} {row['policy']:<12} k*={row['k_star']}", file=sys.stderr)
    for e in doc["savings_summary"]["k_averaged"]:
        print(f"  {e['scenario']:<12} {e['policy']:<12} saving vs Cloud {e['vs_Cloud_pct']:6.2f} %", file=sys.stderr)
    return EXIT_VIOLATION if violations else EXIT_OK


def _check_sweep_cells(doc) -> list:
    """Re-validate every stored cell assignment against its regenerated instance."""
    raw = doc["config"]
    cfg = config_from_dict(
        {
            "scenarios": raw["scenarios"],
            "policies": raw["policies"],
            "k_values": raw["k_values"],
            "seeds": raw["seeds"],
            "workload": raw["workload"],
            "catalog": raw["catalog_overrides"],
            "scenario": raw["scenario_overrides"],
        }
    )
    catalog = cfg.catalog()
    out = []
    workloads = {}
    for c in doc["cells"]:
        if "assignment" not in c:
            continue
        requests = workloads.setdefault(c["seed"], generate_requests(c["seed"], cfg.workload))
        scenario = cfg.scenario(c["scenario"])
        if scenario.vehicle_count:
            dep = make_deployment(c["policy"], scenario.vehicle_count, c["k"], c["seed"], cfg.workload.n_packages)
        else:
            dep = Deployment((), 1, cfg.workload.n_packages)
        assignment = assignment_from_list(
            [{"request": r.id, "tier": t, "node": i} for r, (t, i) in zip(sorted(requests, key=lambda r: r.id), c["assignment"])]
        )
        found = check_assignment(assignment, requests, scenario, dep, catalog)
        again = recompute_power(assignment, requests, scenario, catalog).total_W
        if not found and relative_difference(again, c["total_W"]) > 1e-9:
            found.append(Violation("PowerMismatch", None, c["scenario"], f"seed {c['seed']} k={c['k']}: {again!r} vs {c['total_W']!r}"))
        out += found
    return out


def cmd_oracle_check(args) -> int:
    t0 = time.monotonic()
    mismatches = 0
    for s in range(args.start, args.start + args.count):
        requests, scenario, deployment, catalog = small_instance(s)
        try:
            expect = brute_force_oracle(requests, scenario, deployment, catalog).objective_W
        except Infeasible:
            expect = None
        try:
            report = solve_exact(requests, scenario, deployment, catalog)
            got = report.objective_W
            violations = _check_solution(requests, scenario, deployment, catalog, report)
        except Infeasible:
            got, violations = None, []
        if got != expect or violations:
            mismatches += 1
            print(f"instance {s}: exact {got!r} vs oracle {expect!r}", file=sys.stderr)
            _print_violations(violations)
    print(f"{args.count} instances, {mismatches} mismatches in {time.monotonic() - t0:.1f} s", file=sys.stderr)
    return EXIT_VIOLATION if mismatches else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vfogmatch", description="Minimum-power request placement over cloud, fog and vehicular fog.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--time-limit", type=float, help="per-solve wall-clock limit in seconds")

    sp = sub.add_parser("sweep", help="run a scenario x policy x k x seed sweep")
    common(sp)
    sp.add_argument("--seeds", type=_int_list, help="seed list, e.g. 0-19 or 1,4,7")
    sp.add_argument("--k", type=_int_list, help="package counts, e.g. 1-10")
    sp.add_argument("--scenario", action="append", choices=SCENARIO_NAMES)
    sp.add_argument("--policy", action="append", choices=POLICIES)
    sp.add_argument("--workers", type=int, help="parallel processes (over seeds)")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--check", metavar="RESULTS_JSON", help="re-validate a stored results.json instead of running")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("solve", help="solve one instance")
    common(sp)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--scenario", default="CloudFogVF1", choices=SCENARIO_NAMES)
    sp.add_argument("--policy", default=SAME_TYPE, choices=POLICIES)
    sp.add_argument("--k", type=int, default=6)
    sp.add_argument("--node-limit", type=int)
    sp.add_argument("--search-rounds", type=int)
    sp.add_argument("--greedy", action="store_true", help="use the greedy baseline")
    sp.add_argument("--out", help="write the report JSON here instead of stdout")
    sp.add_argument("--check", metavar="REPORT_JSON", help="re-validate a stored report instead of solving")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("oracle-check", help="compare the exact solver with exhaustive enumeration")
    sp.add_argument("--count", type=int, default=200)
    sp.add_argument("--start", type=int, default=0, help="first instance seed")
    sp.set_defaults(func=cmd_oracle_check)

    sp = sub.add_parser("catalog", help="print the device and server catalog")
    common(sp)
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_catalog)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
