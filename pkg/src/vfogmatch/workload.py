"""Synthetic request generation.

Requests are drawn with :class:`random.Random` (MT19937).  Only
``Random.random()`` is used, because it is the one method whose output the
standard library guarantees to stay stable across Python versions for a given
integer seed; integer draws are derived from it explicitly.  Each request
consumes four draws, in order: CPU, network, storage, package.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .model import DEFAULT_PACKAGE_COUNT, ModelError, Request


class InvalidRange(ModelError):
    pass


@dataclass(frozen=True)
class WorkloadConfig:
    n_requests: int = 50
    cpu_range: tuple[float, float] = (50.0, 300.0)  # MHz
    net_range: tuple[float, float] = (5.0, 50.0)  # Mbps
    storage_range: tuple[float, float] = (10.0, 400.0)  # MB
    n_packages: int = DEFAULT_PACKAGE_COUNT

    def validate(self) -> None:
        if self.n_requests < 0:
            raise InvalidRange("n_requests must be >= 0")
        if self.n_packages < 1:
            raise InvalidRange("n_packages must be >= 1")
        for name in ("cpu_range", "net_range", "storage_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InvalidRange(f"{name}: lower bound {lo} exceeds upper bound {hi}")
            if lo <= 0:
                raise InvalidRange(f"{name}: demands must be strictly positive")

    def to_dict(self) -> dict:
        return {
            "n_requests": self.n_requests,
            "cpu_range": list(self.cpu_range),
            "net_range": list(self.net_range),
            "storage_range": list(self.storage_range),
            "n_packages": self.n_packages,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadConfig":
        kw = dict(d)
        for name in ("cpu_range", "net_range", "storage_range"):
            if name in kw:
                kw[name] = tuple(float(v) for v in kw[name])
        return cls(**kw)


def _uniform(rng: random.Random, lo: float, hi: float) -> float:
    return lo + (hi - lo) * rng.random()


def uniform_index(rng: random.Random, n: int) -> int:
    """Uniform integer in ``[0, n)`` built from a single ``random()`` draw."""
    return min(int(rng.random() * n), n - 1)


def generate_requests(seed: int, cfg: WorkloadConfig = WorkloadConfig()) -> list[Request]:
    cfg.validate()
    rng = random.Random(seed)
    out = []
    for i in range(cfg.n_requests):
        cpu = _uniform(rng, *cfg.cpu_range)
        net = _uniform(rng, *cfg.net_range)
        storage = _uniform(rng, *cfg.storage_range)
        package = 1 + uniform_index(rng, cfg.n_packages)
        out.append(Request(i, cpu, net, storage, package))
    return out


def save_workload(requests: Sequence[Request], path: str | Path) -> None:
    # floats go through repr, so a reload is bit-identical
    data = {"schema_version": 1, "requests": [r.to_dict() for r in requests]}
    Path(path).write_text(json.dumps(data, indent=2) + "\n")


def load_workload(path: str | Path) -> list[Request]:
    data = json.loads(Path(path).read_text())
    return [Request.from_dict(d) for d in data["requests"]]
