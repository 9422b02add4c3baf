"""Domain types, the default device/node catalog and scenario validation.

Units used throughout the package:

* processing in MHz, networking in Mbps, storage in MB, power in W
* 1 GB = 1024 MB, 1 TB = 1024 GB, 1 Gbps = 1000 Mbps
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterator, Mapping, NamedTuple

MB_PER_GB = 1024
MB_PER_TB = 1024 * 1024
MBPS_PER_GBPS = 1000

DEFAULT_PACKAGE_COUNT = 10
DEFAULT_CORE_HOPS = 4
DEFAULT_FOG_SERVERS = 2


class ModelError(ValueError):
    """Base class for every domain error raised by this package."""


class NonPositiveCapacity(ModelError):
    pass


class VFScenarioWithZeroVehicles(ModelError):
    pass


class UnknownDeviceName(ModelError):
    pass


class ScenarioError(ModelError):
    pass


class Tier(str, enum.Enum):
    VF = "VF"
    FIXED_FOG = "FixedFog"
    CLOUD = "Cloud"

    @property
    def order(self) -> int:
        return _TIER_ORDER[self]

    def __str__(self) -> str:
        return self.value


_TIER_ORDER = {Tier.VF: 0, Tier.FIXED_FOG: 1, Tier.CLOUD: 2}
TIERS = (Tier.VF, Tier.FIXED_FOG, Tier.CLOUD)


class NodeRole(str, enum.Enum):
    VEHICLE = "vehicle"
    FOG_SERVER = "fog_server"
    CLOUD_SERVER = "cloud_server"

    def __str__(self) -> str:
        return self.value


TIER_ROLE = {
    Tier.VF: NodeRole.VEHICLE,
    Tier.FIXED_FOG: NodeRole.FOG_SERVER,
    Tier.CLOUD: NodeRole.CLOUD_SERVER,
}

DEVICE_NAMES = (
    "vehicle_wifi",
    "ap",
    "rsu",
    "onu",
    "olt",
    "fog_net",
    "eth_switch",
    "edge_router",
    "core_router",
    "cloud_switch",
    "cloud_router",
)

# Devices replicated once per vehicle; every other device is a single shared box.
PER_VEHICLE_DEVICES = frozenset({"vehicle_wifi"})

DEFAULT_PATHS: dict[Tier, tuple[str, ...]] = {
    Tier.VF: ("rsu", "ap", "vehicle_wifi"),
    Tier.FIXED_FOG: ("rsu", "ap", "onu", "olt", "fog_net"),
    Tier.CLOUD: (
        "rsu",
        "ap",
        "onu",
        "olt",
        "edge_router",
        "eth_switch",
        "core_router",
        "cloud_router",
        "cloud_switch",
    ),
}


@dataclass(frozen=True)
class Request:
    """One user demand and the software package it must be served with."""

    id: int
    cpu_demand: float  # MHz
    net_demand: float  # Mbps
    storage_demand: float  # MB
    package: int

    def __post_init__(self):
        for name in ("cpu_demand", "net_demand", "storage_demand"):
            if not getattr(self, name) > 0:
                raise ModelError(f"request {self.id}: {name} must be strictly positive")
        if self.package < 1:
            raise ModelError(f"request {self.id}: package ids start at 1")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "cpu_demand": self.cpu_demand,
            "net_demand": self.net_demand,
            "storage_demand": self.storage_demand,
            "package": self.package,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Request":
        return cls(
            id=int(d["id"]),
            cpu_demand=float(d["cpu_demand"]),
            net_demand=float(d["net_demand"]),
            storage_demand=float(d["storage_demand"]),
            package=int(d["package"]),
        )


@dataclass(frozen=True)
class NodeSpec:
    role: NodeRole
    cpu_capacity: float  # MHz
    cpu_max_power: float  # W
    storage_capacity: float  # MB
    storage_max_power: float  # W


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    capacity: float  # Mbps
    max_power: float  # W
    enforce_capacity: bool = False


@dataclass(frozen=True)
class Catalog:
    """Capacities and maximum powers of compute nodes and network devices."""

    nodes: tuple[NodeSpec, ...]
    devices: tuple[DeviceSpec, ...]

    def node(self, role: NodeRole | str) -> NodeSpec:
        role = NodeRole(role)
        for n in self.nodes:
            if n.role is role:
                return n
        raise ModelError(f"catalog has no node with role {role}")

    def device(self, name: str) -> DeviceSpec:
        for d in self.devices:
            if d.name == name:
                return d
        raise UnknownDeviceName(name)

    def lookup(self, name: str) -> NodeSpec | DeviceSpec:
        if name in NodeRole._value2member_map_:
            return self.node(name)
        return self.device(name)

    def with_overrides(self, overrides: Mapping) -> "Catalog":
        """Return a copy with fields replaced from a ``{"nodes": .., "devices": ..}`` mapping."""
        nodes = list(self.nodes)
        for role, fields in (overrides.get("nodes") or {}).items():
            spec = self.node(role)
            nodes[nodes.index(spec)] = replace(spec, **{k: float(v) for k, v in fields.items()})
        devices = list(self.devices)
        for name, fields in (overrides.get("devices") or {}).items():
            spec = self.device(name)
            fields = dict(fields)
            if "enforce_capacity" in fields:
                fields["enforce_capacity"] = bool(fields["enforce_capacity"])
            for k in ("capacity", "max_power"):
                if k in fields:
                    fields[k] = float(fields[k])
            devices[devices.index(spec)] = replace(spec, **fields)
        return Catalog(tuple(nodes), tuple(devices))

    def to_dict(self) -> dict:
        return {
            "nodes": {
                str(n.role): {
                    "cpu_capacity": n.cpu_capacity,
                    "cpu_max_power": n.cpu_max_power,
                    "storage_capacity": n.storage_capacity,
                    "storage_max_power": n.storage_max_power,
                }
                for n in self.nodes
            },
            "devices": {
                d.name: {
                    "capacity": d.capacity,
                    "max_power": d.max_power,
                    "enforce_capacity": d.enforce_capacity,
                }
                for d in self.devices
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Catalog":
        nodes = tuple(
            NodeSpec(
                role=NodeRole(role),
                cpu_capacity=float(f["cpu_capacity"]),
                cpu_max_power=float(f["cpu_max_power"]),
                storage_capacity=float(f["storage_capacity"]),
                storage_max_power=float(f["storage_max_power"]),
            )
            for role, f in d["nodes"].items()
        )
        devices = []
        for name, f in d["devices"].items():
            if name not in DEVICE_NAMES:
                raise UnknownDeviceName(name)
            devices.append(
                DeviceSpec(
                    name=name,
                    capacity=float(f["capacity"]),
                    max_power=float(f["max_power"]),
                    enforce_capacity=bool(f.get("enforce_capacity", False)),
                )
            )
        return cls(nodes, tuple(devices))

    def rows(self) -> Iterator[tuple[str, float, str, float]]:
        """Flat (entry, capacity, unit, max power) rows, one per catalog value pair."""
        for n in self.nodes:
            yield f"{n.role}.cpu", n.cpu_capacity, "MHz", n.cpu_max_power
            yield f"{n.role}.storage", n.storage_capacity, "MB", n.storage_max_power
        for d in self.devices:
            yield d.name, d.capacity, "Mbps", d.max_power


def default_catalog() -> Catalog:
    nodes = (
        NodeSpec(NodeRole.VEHICLE, 240.0, 3.1, 8 * MB_PER_GB, 0.5),
        NodeSpec(NodeRole.FOG_SERVER, 2700.0, 64.5, 120 * MB_PER_GB, 10.5),
        NodeSpec(NodeRole.CLOUD_SERVER, 4000.0, 300.0, 75.6 * MB_PER_TB, 4900.0),
    )
    devices = (
        DeviceSpec("vehicle_wifi", 54.0, 0.207, enforce_capacity=True),
        DeviceSpec("ap", 1.75 * MBPS_PER_GBPS, 7.42),
        DeviceSpec("rsu", 27.0, 7.0),
        DeviceSpec("onu", 2.488 * MBPS_PER_GBPS, 5.0),
        DeviceSpec("olt", 320 * MBPS_PER_GBPS, 400.0),
        DeviceSpec("fog_net", 2.4 * MBPS_PER_GBPS, 48.0),
        DeviceSpec("eth_switch", 100 * MBPS_PER_GBPS, 63200.0),
        DeviceSpec("edge_router", 200 * MBPS_PER_GBPS, 4200.0),
        DeviceSpec("core_router", 640 * MBPS_PER_GBPS, 10900.0),
        DeviceSpec("cloud_switch", 320 * MBPS_PER_GBPS, 3800.0),
        DeviceSpec("cloud_router", 660 * MBPS_PER_GBPS, 5100.0),
    )
    return Catalog(nodes, devices)


@dataclass(frozen=True)
class PathSpec:
    """Ordered device chain from the user to a destination tier.

    ``core_router`` entries are charged ``core_hops`` times; a chain without a
    core router ignores ``core_hops``.
    """

    destination_tier: Tier
    devices: tuple[DeviceSpec, ...]
    core_hops: int = 0

    def hops(self) -> Iterator[tuple[DeviceSpec, int]]:
        for d in self.devices:
            if d.name == "core_router":
                if self.core_hops:
                    yield d, self.core_hops
            else:
                yield d, 1

    @property
    def watts_per_mbps(self) -> float:
        return sum(mult * d.max_power / d.capacity for d, mult in self.hops())


SCENARIO_NAMES = ("Cloud", "CloudFog", "CloudFogVF1", "CloudFogVF2", "CloudFogVF3")
_NAMED_VEHICLES = {"Cloud": 0, "CloudFog": 0, "CloudFogVF1": 5, "CloudFogVF2": 10, "CloudFogVF3": 20}


@dataclass(frozen=True)
class Scenario:
    """Which tiers exist and how large they are.

    ``fog_server_count``, ``core_hops`` and ``enforce`` left as ``None`` are
    filled in by :func:`validate_scenario`.  ``enforce`` names the device
    classes whose capacity is a hard constraint; ``None`` takes the catalog's
    ``enforce_capacity`` flags.
    """

    name: str = "custom"
    vehicle_count: int = 0
    fog_server_count: int | None = None
    core_hops: int | None = None
    enforce: frozenset[str] | None = None
    cloud_enabled: bool = True
    paths: tuple[tuple[Tier, tuple[str, ...]], ...] | None = None

    @classmethod
    def named(cls, name: str, **overrides) -> "Scenario":
        if name not in _NAMED_VEHICLES:
            raise ScenarioError(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
        fields = {"name": name, "vehicle_count": _NAMED_VEHICLES[name]}
        if name == "Cloud":
            fields["fog_server_count"] = 0
        fields.update(overrides)
        return cls(**fields)

    @property
    def tiers(self) -> tuple[Tier, ...]:
        out = []
        if self.vehicle_count:
            out.append(Tier.VF)
        if self.fog_server_count:
            out.append(Tier.FIXED_FOG)
        if self.cloud_enabled:
            out.append(Tier.CLOUD)
        return tuple(out)

    def path_names(self) -> dict[Tier, tuple[str, ...]]:
        names = dict(DEFAULT_PATHS)
        if self.paths:
            names.update(dict(self.paths))
        return names

    def build_paths(self, catalog: Catalog) -> dict[Tier, PathSpec]:
        enforce = self.enforce if self.enforce is not None else {
            d.name for d in catalog.devices if d.enforce_capacity
        }
        paths = {}
        for tier, names in self.path_names().items():
            devs = tuple(replace(catalog.device(n), enforce_capacity=n in enforce) for n in names)
            paths[tier] = PathSpec(tier, devs, DEFAULT_CORE_HOPS if self.core_hops is None else self.core_hops)
        return paths

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "vehicle_count": self.vehicle_count,
            "fog_server_count": self.fog_server_count,
            "core_hops": self.core_hops,
            "enforce": sorted(self.enforce) if self.enforce is not None else None,
            "cloud_enabled": self.cloud_enabled,
        }
        if self.paths:
            d["paths"] = {str(t): list(p) for t, p in self.paths}
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scenario":
        fields = dict(d)
        if fields.get("enforce") is not None:
            fields["enforce"] = frozenset(fields["enforce"])
        if fields.get("paths"):
            fields["paths"] = tuple((Tier(t), tuple(p)) for t, p in fields["paths"].items())
        return cls(**fields)


def validate_scenario(scenario: Scenario, catalog: Catalog) -> Scenario:
    """Check scenario and catalog invariants and fill omitted defaults."""
    for entry, cap, _unit, power in catalog.rows():
        if not (cap > 0 and math.isfinite(cap)):
            raise NonPositiveCapacity(f"{entry}: capacity must be positive, got {cap}")
        if not power >= 0:
            raise NonPositiveCapacity(f"{entry}: max power must be non-negative, got {power}")
    for n in catalog.nodes:
        if not n.cpu_max_power > 0 or not n.storage_max_power > 0:
            raise NonPositiveCapacity(f"{n.role}: node powers must be positive")
    for role in NodeRole:
        catalog.node(role)

    s = scenario
    if s.vehicle_count < 0:
        raise ScenarioError("vehicle_count must be >= 0")
    if s.name.startswith("CloudFogVF") and s.vehicle_count == 0:
        raise VFScenarioWithZeroVehicles(s.name)

    fog = s.fog_server_count
    if fog is None:
        fog = 0 if s.name == "Cloud" else DEFAULT_FOG_SERVERS
    if fog < 0:
        raise ScenarioError("fog_server_count must be >= 0")
    hops = DEFAULT_CORE_HOPS if s.core_hops is None else s.core_hops
    if hops < 0:
        raise ScenarioError("core_hops must be >= 0")

    if s.name == "Cloud" and (s.vehicle_count or fog):
        raise ScenarioError("the Cloud scenario has no vehicles and no fog servers")
    if s.name == "CloudFog" and (s.vehicle_count or fog < 1):
        raise ScenarioError("the CloudFog scenario has no vehicles and at least one fog server")
    if s.name in SCENARIO_NAMES and not s.cloud_enabled:
        raise ScenarioError(f"{s.name} always includes the cloud")

    enforce = s.enforce
    if enforce is None:
        enforce = frozenset(d.name for d in catalog.devices if d.enforce_capacity)
    for name in enforce:
        if name not in DEVICE_NAMES:
            raise UnknownDeviceName(name)
    for names in s.path_names().values():
        for name in names:
            if name not in DEVICE_NAMES:
                raise UnknownDeviceName(name)
            catalog.device(name)

    out = replace(s, fog_server_count=fog, core_hops=hops, enforce=frozenset(enforce))
    if not out.tiers:
        raise ScenarioError("scenario has no computing tier")
    return out


class NodeRef(NamedTuple):
    """A computing node: its tier and its index inside the tier.

    The cloud is a single aggregate node (index 0) with unbounded capacity.
    """

    tier: Tier
    index: int = 0

    def sort_key(self) -> tuple[int, int]:
        return self.tier.order, self.index

    def label(self) -> str:
        return f"{self.tier.value}[{self.index}]"


def scenario_nodes(scenario: Scenario) -> list[NodeRef]:
    """Every computing node of a validated scenario, in tier order."""
    nodes = [NodeRef(Tier.VF, j) for j in range(scenario.vehicle_count)]
    nodes += [NodeRef(Tier.FIXED_FOG, f) for f in range(scenario.fog_server_count or 0)]
    if scenario.cloud_enabled:
        nodes.append(NodeRef(Tier.CLOUD, 0))
    return nodes


# request id -> serving node
Assignment = dict[int, NodeRef]
