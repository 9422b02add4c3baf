"""Independent checks of assignments and their power.

Nothing here reuses the optimizer's cost cache or the power module's
aggregation: capacities and powers are read straight from the catalog and
power is summed request by request, so agreement with the solver is
evidence rather than tautology.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .deployment import Deployment
from .model import (
    PER_VEHICLE_DEVICES,
    SCENARIO_NAMES,
    TIER_ROLE,
    TIERS,
    Catalog,
    NodeRef,
    Request,
    Scenario,
    Tier,
    default_catalog,
    scenario_nodes,
    validate_scenario,
)
from .power import PowerBreakdown, TierPower

UNASSIGNED = "Unassigned"
UNKNOWN_REQUEST = "UnknownRequest"
UNKNOWN_NODE = "UnknownNode"
PACKAGE_MISMATCH = "PackageMismatch"
CPU_OVER_CAPACITY = "CpuOverCapacity"
STORAGE_OVER_CAPACITY = "StorageOverCapacity"
NET_OVER_CAPACITY = "NetOverCapacity"

# absolute slack on capacity sums, far below any demand granularity
_SLACK = 1e-9


@dataclass(frozen=True)
class Violation:
    kind: str
    request: int | None = None
    node: str | None = None
    detail: str = ""

    def __str__(self) -> str:
        where = []
        if self.request is not None:
            where.append(f"request {self.request}")
        if self.node is not None:
            where.append(self.node)
        return f"{self.kind} ({', '.join(where)}): {self.detail}" if where else f"{self.kind}: {self.detail}"


def check_assignment(
    assignment: Mapping[int, NodeRef],
    requests: Sequence[Request],
    scenario: Scenario,
    deployment: Deployment,
    catalog: Catalog | None = None,
) -> list[Violation]:
    """Every violated assignment invariant; empty iff the assignment is valid."""
    catalog = catalog or default_catalog()
    scenario = validate_scenario(scenario, catalog)
    nodes = set(scenario_nodes(scenario))
    out: list[Violation] = []
    known = {r.id for r in requests}

    for rid in sorted(set(assignment) - known):
        out.append(Violation(UNKNOWN_REQUEST, rid, assignment[rid].label(), "no such request"))

    load: dict[NodeRef, list[float]] = {}
    for r in sorted(requests, key=lambda r: r.id):
        node = assignment.get(r.id)
        if node is None:
            out.append(Violation(UNASSIGNED, r.id, None, "request has no node"))
            continue
        node = NodeRef(Tier(node[0]), int(node[1]))
        if node not in nodes:
            out.append(Violation(UNKNOWN_NODE, r.id, node.label(), f"not a node of scenario {scenario.name}"))
            continue
        if node.tier is Tier.VF:
            if node.index >= deployment.vehicle_count:
                out.append(Violation(UNKNOWN_NODE, r.id, node.label(), "vehicle missing from the deployment"))
                continue
            if r.package not in deployment.packages[node.index]:
                out.append(
                    Violation(
                        PACKAGE_MISMATCH,
                        r.id,
                        node.label(),
                        f"needs package {r.package}, vehicle holds {sorted(deployment.packages[node.index])}",
                    )
                )
        acc = load.setdefault(node, [0.0, 0.0, 0.0])
        acc[0] += r.cpu_demand
        acc[1] += r.storage_demand
        acc[2] += r.net_demand

    enforced = scenario.enforce
    names = scenario.path_names()
    for node in sorted(load, key=NodeRef.sort_key):
        if node.tier is Tier.CLOUD:
            continue
        spec = catalog.node(TIER_ROLE[node.tier])
        cpu, sto, net = load[node]
        if cpu > spec.cpu_capacity + _SLACK:
            out.append(Violation(CPU_OVER_CAPACITY, None, node.label(), f"{cpu:.6g} MHz > {spec.cpu_capacity:.6g} MHz"))
        if sto > spec.storage_capacity + _SLACK:
            out.append(
                Violation(STORAGE_OVER_CAPACITY, None, node.label(), f"{sto:.6g} MB > {spec.storage_capacity:.6g} MB")
            )
        if node.tier is Tier.VF:
            for name in names[Tier.VF]:
                if name in PER_VEHICLE_DEVICES and name in enforced:
                    cap = catalog.device(name).capacity
                    if net > cap + _SLACK:
                        out.append(Violation(NET_OVER_CAPACITY, None, node.label(), f"{name}: {net:.6g} Mbps > {cap:.6g} Mbps"))

    # enforced devices carrying the traffic of every request routed through them
    for name in sorted(enforced - PER_VEHICLE_DEVICES):
        through = 0.0
        for node, (_, _, net) in load.items():
            if name in names[node.tier]:
                through += net
        cap = catalog.device(name).capacity
        if through > cap + _SLACK:
            out.append(Violation(NET_OVER_CAPACITY, None, name, f"{through:.6g} Mbps > {cap:.6g} Mbps"))
    return out


def recompute_power(
    assignment: Mapping[int, NodeRef],
    requests: Sequence[Request],
    scenario: Scenario,
    catalog: Catalog | None = None,
) -> PowerBreakdown:
    """Power of an assignment, summed request by request from catalog values."""
    catalog = catalog or default_catalog()
    scenario = validate_scenario(scenario, catalog)
    names = scenario.path_names()
    acc = {t: [0.0, 0.0, 0.0] for t in TIERS}
    for r in requests:
        tier = Tier(assignment[r.id][0])
        spec = catalog.node(TIER_ROLE[tier])
        acc[tier][0] += r.cpu_demand * spec.cpu_max_power / spec.cpu_capacity
        for name in names[tier]:
            dev = catalog.device(name)
            times = scenario.core_hops if name == "core_router" else 1
            acc[tier][1] += times * r.net_demand * dev.max_power / dev.capacity
        acc[tier][2] += r.storage_demand * spec.storage_max_power / spec.storage_capacity
    return PowerBreakdown.from_tiers({t: TierPower(*acc[t]) for t in TIERS})


def relative_difference(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


CONSERVATION = "Conservation"
MONOTONICITY = "Monotonicity"
DOMINANCE = "Dominance"
COLLAPSE = "Collapse"

_ORDER = SCENARIO_NAMES  # decreasing power by construction of the tiers


def check_sweep(doc: Mapping) -> list[Violation]:
    """Invariants of a sweep results document (the ``results.json`` structure)."""
    out: list[Violation] = []
    cfg = doc["config"]
    n_requests = cfg["workload"]["n_requests"]
    n_packages = cfg["workload"]["n_packages"]

    for c in doc["cells"]:
        if "tier_counts" not in c:
            continue
        total = sum(c["tier_counts"].values())
        if total != n_requests:
            out.append(
                Violation(CONSERVATION, None, c["scenario"], f"seed {c['seed']} {c['policy']} k={c['k']}: {total} requests")
            )

    means: dict[tuple, float] = {(m["scenario"], m["policy"], m["k"]): m["total_W"] for m in doc["means"]}
    ks = sorted({k for _, _, k in means})
    for name in _ORDER[2:]:
        for policy in cfg["policies"]:
            curve = [(k, means[(name, policy, k)]) for k in ks if (name, policy, k) in means]
            for (k0, p0), (k1, p1) in zip(curve, curve[1:]):
                if p1 > p0:
                    out.append(Violation(MONOTONICITY, None, name, f"{policy}: {p1!r} W at k={k1} > {p0!r} W at k={k0}"))

    for policy in cfg["policies"]:
        for k in ks:
            chain = [(n, means[(n, policy, k)]) for n in _ORDER if (n, policy, k) in means]
            for (n0, p0), (n1, p1) in zip(chain, chain[1:]):
                if p1 > p0:
                    out.append(Violation(DOMINANCE, None, n1, f"{policy} k={k}: {p1!r} W > {n0} {p0!r} W"))

    by_cell = {(c["seed"], c["scenario"], c["policy"], c["k"]): c for c in doc["cells"]}
    for (seed, name, policy, k), c in sorted(by_cell.items()):
        if k != n_packages or policy != "same_type" or not name.startswith("CloudFogVF"):
            continue
        other = by_cell.get((seed, name, "random_type", k))
        if other is None:
            continue
        if c.get("total_W") != other.get("total_W") or c.get("assignment") != other.get("assignment"):
            out.append(Violation(COLLAPSE, None, name, f"seed {seed}: same-type and random-type differ at k={k}"))
    return out
