"""JSON run configuration.

A config file may set any subset of these keys; omitted ones keep their
defaults::

    {
      "schema_version": 1,
      "scenarios": ["Cloud", "CloudFog", "CloudFogVF1", "CloudFogVF2", "CloudFogVF3"],
      "policies": ["same_type", "random_type"],
      "k_values": [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
      "seeds": [0, 1, 2],            # or "seed_count": 20 for seeds 0..19
      "workload": {"n_requests": 50, "cpu_range": [50, 300], ...},
      "catalog": {"nodes": {"fog_server": {"cpu_capacity": 2700}},
                  "devices": {"rsu": {"capacity": 27, "enforce_capacity": false}}},
      "scenario": {"core_hops": 4, "fog_server_count": 2, "enforce": ["vehicle_wifi"]},
      "limits": {"time_limit": 60, "node_limit": 25, "search_rounds": 12, "search_seed": 0},
      "workers": 1,
      "plateau_tolerance": 0.002,
      "out_dir": "results"
    }
"""

from __future__ import annotations

import json
from dataclasses import asdict, replace
from pathlib import Path
from typing import Mapping

from .harness import SWEEP_LIMITS, SweepConfig
from .model import ModelError
from .optimizer import SolveLimits
from .workload import WorkloadConfig

SCHEMA_VERSION = 1
_KEYS = {
    "schema_version",
    "scenarios",
    "policies",
    "k_values",
    "seeds",
    "seed_count",
    "workload",
    "catalog",
    "scenario",
    "limits",
    "workers",
    "plateau_tolerance",
    "out_dir",
}
_SCENARIO_KEYS = {"core_hops", "fog_server_count", "enforce"}


class ConfigError(ModelError):
    pass


def config_from_dict(d: Mapping) -> SweepConfig:
    unknown = set(d) - _KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    version = d.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    if "seeds" in d and "seed_count" in d:
        raise ConfigError("give either seeds or seed_count, not both")
    bad = set(d.get("scenario", {})) - _SCENARIO_KEYS
    if bad:
        raise ConfigError(f"unknown scenario override keys: {sorted(bad)}")

    fields = {}
    try:
        for key in ("scenarios", "policies", "k_values", "seeds"):
            if key in d:
                fields[key] = tuple(d[key])
        if "seed_count" in d:
            fields["seeds"] = tuple(range(int(d["seed_count"])))
        if "workload" in d:
            fields["workload"] = WorkloadConfig.from_dict({**WorkloadConfig().to_dict(), **d["workload"]})
        if "catalog" in d:
            fields["catalog_overrides"] = dict(d["catalog"])
        if "scenario" in d:
            fields["scenario_overrides"] = dict(d["scenario"])
        if "limits" in d:
            fields["limits"] = SolveLimits(**{**asdict(SWEEP_LIMITS), **d["limits"]})
        for key in ("workers", "plateau_tolerance", "out_dir"):
            if key in d:
                fields[key] = d[key]
        cfg = replace(SweepConfig(), **fields)
        cfg.validate()
        cfg.catalog()
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path: str | Path) -> SweepConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data)
