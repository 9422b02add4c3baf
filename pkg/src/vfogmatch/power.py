"""Load-proportional power accounting.

Every server and network device draws ``(carried load / capacity) * max power``;
there is no idle term.  This makes the total power of an assignment additive
over requests, which is what lets the optimizer price each request/node pair
independently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .deployment import Deployment
from .model import (
    PER_VEHICLE_DEVICES,
    TIER_ROLE,
    TIERS,
    Catalog,
    ModelError,
    NodeRef,
    NodeRole,
    NodeSpec,
    PathSpec,
    Request,
    Scenario,
    Tier,
    default_catalog,
    scenario_nodes,
    validate_scenario,
)


class OverCapacity(ModelError):
    pass


class UnassignedRequest(ModelError):
    pass


class PackageMismatch(ModelError):
    pass


class UnknownNode(ModelError):
    pass


@dataclass(frozen=True)
class TierPower:
    processing_W: float = 0.0
    networking_W: float = 0.0
    storage_W: float = 0.0

    @property
    def total_W(self) -> float:
        return self.processing_W + self.networking_W + self.storage_W


@dataclass(frozen=True)
class PowerBreakdown:
    """Per-tier processing / networking / storage power and the grand total."""

    vf: TierPower = TierPower()
    fixed_fog: TierPower = TierPower()
    cloud: TierPower = TierPower()

    @classmethod
    def from_tiers(cls, tiers: Mapping[Tier, TierPower]) -> "PowerBreakdown":
        return cls(
            vf=tiers.get(Tier.VF, TierPower()),
            fixed_fog=tiers.get(Tier.FIXED_FOG, TierPower()),
            cloud=tiers.get(Tier.CLOUD, TierPower()),
        )

    def tier(self, tier: Tier) -> TierPower:
        return {Tier.VF: self.vf, Tier.FIXED_FOG: self.fixed_fog, Tier.CLOUD: self.cloud}[tier]

    @property
    def total_W(self) -> float:
        return sum(
            (self.tier(t).processing_W + self.tier(t).networking_W + self.tier(t).storage_W for t in TIERS),
            0.0,
        )

    def to_dict(self) -> dict:
        d = {}
        for t in TIERS:
            tp = self.tier(t)
            d[t.value] = {
                "processing_W": tp.processing_W,
                "networking_W": tp.networking_W,
                "storage_W": tp.storage_W,
            }
        d["total_W"] = self.total_W
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "PowerBreakdown":
        return cls.from_tiers({t: TierPower(**d[t.value]) for t in TIERS})


def processing_power(load_mhz: float, node: NodeSpec, enforce: bool = True) -> float:
    if load_mhz < 0:
        raise ModelError("processing load must be non-negative")
    if enforce and load_mhz > node.cpu_capacity:
        raise OverCapacity(f"{node.role}: {load_mhz} MHz exceeds {node.cpu_capacity} MHz")
    return load_mhz / node.cpu_capacity * node.cpu_max_power


def storage_power(load_mb: float, node: NodeSpec, enforce: bool = True) -> float:
    if load_mb < 0:
        raise ModelError("storage load must be non-negative")
    if enforce and load_mb > node.storage_capacity:
        raise OverCapacity(f"{node.role}: {load_mb} MB exceeds {node.storage_capacity} MB")
    return load_mb / node.storage_capacity * node.storage_max_power


def network_power(net_mbps: float, path: PathSpec, enforce: bool = True) -> float:
    """Power drawn along ``path`` by a flow of ``net_mbps``.

    Only devices flagged ``enforce_capacity`` can raise :class:`OverCapacity`.
    """
    if net_mbps < 0:
        raise ModelError("network demand must be non-negative")
    total = 0.0
    for dev, mult in path.hops():
        if enforce and dev.enforce_capacity and net_mbps > dev.capacity:
            raise OverCapacity(f"{dev.name}: {net_mbps} Mbps exceeds {dev.capacity} Mbps")
        total += mult * (net_mbps / dev.capacity * dev.max_power)
    return total


def request_power(request: Request, tier: Tier, paths: Mapping[Tier, PathSpec], catalog: Catalog) -> float:
    """Standalone power of serving one request on a node of ``tier``, ignoring capacity."""
    spec = catalog.node(TIER_ROLE[tier])
    return (
        processing_power(request.cpu_demand, spec, enforce=False)
        + network_power(request.net_demand, paths[tier], enforce=False)
        + storage_power(request.storage_demand, spec, enforce=False)
    )


def total_power(
    assignment: Mapping[int, NodeRef],
    requests: Sequence[Request],
    scenario: Scenario,
    deployment: Deployment,
    catalog: Catalog | None = None,
) -> PowerBreakdown:
    """Power breakdown of a complete assignment.

    Loads are aggregated per node and per network device before the
    proportional model is applied, so this is a different summation path
    from pricing requests one by one.
    """
    catalog = catalog or default_catalog()
    scenario = validate_scenario(scenario, catalog)
    paths = scenario.build_paths(catalog)
    nodes = set(scenario_nodes(scenario))

    cpu: dict[NodeRef, float] = {n: 0.0 for n in nodes}
    sto: dict[NodeRef, float] = {n: 0.0 for n in nodes}
    net: dict[NodeRef, float] = {n: 0.0 for n in nodes}
    for r in requests:
        if r.id not in assignment:
            raise UnassignedRequest(f"request {r.id} is not assigned")
        node = assignment[r.id]
        if node not in nodes:
            raise UnknownNode(f"request {r.id} assigned to {node.label()}, absent from {scenario.name}")
        if node.tier is Tier.VF and not deployment.holds(node.index, r.package):
            raise PackageMismatch(f"request {r.id} needs package {r.package}, absent from {node.label()}")
        cpu[node] += r.cpu_demand
        sto[node] += r.storage_demand
        net[node] += r.net_demand

    tier_net = {t: 0.0 for t in TIERS}
    tiers = {}
    for t in TIERS:
        spec = catalog.node(TIER_ROLE[t])
        bounded = spec.role is not NodeRole.CLOUD_SERVER
        members = sorted((n for n in nodes if n.tier is t), key=NodeRef.sort_key)
        proc = stor = 0.0
        for n in members:
            proc += processing_power(cpu[n], spec, enforce=bounded)
            stor += storage_power(sto[n], spec, enforce=bounded)
            tier_net[t] += net[n]
            if t is Tier.VF:
                for dev, _ in paths[t].hops():
                    if dev.name in PER_VEHICLE_DEVICES and dev.enforce_capacity and net[n] > dev.capacity:
                        raise OverCapacity(f"{dev.name} of {n.label()}: {net[n]} Mbps exceeds {dev.capacity} Mbps")
        tiers[t] = TierPower(proc, network_power(tier_net[t], paths[t], enforce=False), stor)

    for name, cap, load in shared_device_loads(paths, tier_net):
        if load > cap:
            raise OverCapacity(f"{name}: {load} Mbps exceeds {cap} Mbps")
    return PowerBreakdown.from_tiers(tiers)


def shared_device_loads(paths: Mapping[Tier, PathSpec], tier_net: Mapping[Tier, float]):
    """(device, capacity, load) for every enforced device shared across requests."""
    seen: dict[str, list] = {}
    for t, path in paths.items():
        for dev, _ in path.hops():
            if dev.name in PER_VEHICLE_DEVICES or not dev.enforce_capacity:
                continue
            entry = seen.setdefault(dev.name, [dev.capacity, 0.0])
            entry[1] += tier_net.get(t, 0.0)
    return [(name, cap, load) for name, (cap, load) in seen.items()]
