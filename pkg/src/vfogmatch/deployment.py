"""Software-package deployment policies for the vehicles of the VF.

The cloud and the fixed fog node implicitly hold every package; a
:class:`Deployment` only describes the vehicles.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path

from .model import DEFAULT_PACKAGE_COUNT, ModelError

SAME_TYPE = "same_type"
RANDOM_TYPE = "random_type"
POLICIES = (SAME_TYPE, RANDOM_TYPE)


class KOutOfRange(ModelError):
    pass


@dataclass(frozen=True)
class Deployment:
    packages: tuple[frozenset[int], ...]
    k: int
    n_packages: int = DEFAULT_PACKAGE_COUNT
    policy: str = "custom"

    def __post_init__(self):
        if not 1 <= self.k <= self.n_packages:
            raise KOutOfRange(f"k={self.k} outside 1..{self.n_packages}")
        for j, pkgs in enumerate(self.packages):
            if len(pkgs) != self.k:
                raise ModelError(f"vehicle {j} holds {len(pkgs)} packages, expected {self.k}")
            if any(not 1 <= p <= self.n_packages for p in pkgs):
                raise ModelError(f"vehicle {j} holds an unknown package id")

    @property
    def vehicle_count(self) -> int:
        return len(self.packages)

    def holds(self, vehicle: int, package: int) -> bool:
        return package in self.packages[vehicle]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "policy": self.policy,
            "k": self.k,
            "n_packages": self.n_packages,
            "vehicles": [sorted(p) for p in self.packages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Deployment":
        return cls(
            packages=tuple(frozenset(p) for p in d["vehicles"]),
            k=int(d["k"]),
            n_packages=int(d.get("n_packages", DEFAULT_PACKAGE_COUNT)),
            policy=d.get("policy", "custom"),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Deployment":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check(vehicles: int, k: int, n_packages: int) -> None:
    if vehicles < 0:
        raise ModelError("vehicle count must be >= 0")
    if not 1 <= k <= n_packages:
        raise KOutOfRange(f"k={k} outside 1..{n_packages}")


def same_type_deployment(vehicles: int, k: int, n_packages: int = DEFAULT_PACKAGE_COUNT) -> Deployment:
    """Every vehicle holds packages ``{1, ..., k}``."""
    _check(vehicles, k, n_packages)
    pkgs = frozenset(range(1, k + 1))
    return Deployment((pkgs,) * vehicles, k, n_packages, SAME_TYPE)


def vehicle_seed(seed: int, vehicle: int) -> int:
    """64-bit sub-seed for one vehicle's package draw."""
    digest = hashlib.sha256(f"vfogmatch/deployment/{seed}/{vehicle}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def package_order(seed: int, vehicle: int, n_packages: int = DEFAULT_PACKAGE_COUNT) -> list[int]:
    """Uniformly random permutation of ``1..n_packages`` for one vehicle (Fisher-Yates)."""
    rng = random.Random(vehicle_seed(seed, vehicle))
    perm = list(range(1, n_packages + 1))
    for i in range(n_packages - 1, 0, -1):
        j = min(int(rng.random() * (i + 1)), i)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def random_type_deployment(
    vehicles: int, k: int, seed: int, n_packages: int = DEFAULT_PACKAGE_COUNT
) -> Deployment:
    """Each vehicle independently gets ``k`` distinct packages drawn uniformly.

    A vehicle's set is the first ``k`` entries of its own random permutation,
    so the draw for vehicle ``j`` does not depend on how many vehicles exist,
    and the set at ``k`` is contained in the set at ``k + 1``.
    """
    _check(vehicles, k, n_packages)
    pkgs = tuple(frozenset(package_order(seed, j, n_packages)[:k]) for j in range(vehicles))
    return Deployment(pkgs, k, n_packages, RANDOM_TYPE)


def make_deployment(policy: str, vehicles: int, k: int, seed: int, n_packages: int = DEFAULT_PACKAGE_COUNT) -> Deployment:
    if policy == SAME_TYPE:
        return same_type_deployment(vehicles, k, n_packages)
    if policy == RANDOM_TYPE:
        return random_type_deployment(vehicles, k, seed, n_packages)
    raise ModelError(f"unknown deployment policy {policy!r}")
