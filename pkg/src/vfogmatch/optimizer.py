"""Minimum-power matching of requests to computing nodes.

The model is a binary assignment program: one variable per (request, node)
pair, each request served by exactly one node that holds its software
package, knapsack constraints per node on CPU, storage and (for vehicles)
WiFi, and an additive objective.  Because the power model is
load-proportional, the cost of a pair is the request's standalone power on
that node's tier.

:func:`solve_exact` runs a best-first branch-and-bound over requests.  The
bound for the unassigned requests is the sum of their cheapest feasible
costs, tightened by Lagrangian prices on each tier's aggregate residual
capacity (prices of zero give back the plain cheapest-node bound).  The
incumbent is seeded by local search so that limited runs still return good
assignments together with an honest optimality gap.
"""

from __future__ import annotations

import heapq
import math
import random
import time
from dataclasses import dataclass, field
from itertools import count
from typing import Mapping, Sequence

from .deployment import Deployment
from .model import (
    PER_VEHICLE_DEVICES,
    Catalog,
    ModelError,
    NodeRef,
    NodeRole,
    Request,
    Scenario,
    Tier,
    TIER_ROLE,
    default_catalog,
    scenario_nodes,
    validate_scenario,
)
from .power import PowerBreakdown, request_power, total_power

INF = math.inf
_FEAS_TOL = 1e-9


class Infeasible(ModelError):
    pass


class InstanceTooLarge(ModelError):
    pass


class TimeLimitExceeded(ModelError):
    """Raised only on request; carries the incumbent report."""

    def __init__(self, report: "SolveReport"):
        super().__init__(f"search stopped with gap {report.gap_W:.6g} W ({report.status})")
        self.report = report


@dataclass(frozen=True)
class SolveLimits:
    time_limit: float = 60.0  # wall clock seconds; the only non-deterministic stop
    node_limit: int = 100_000  # branch-and-bound expansions
    search_rounds: int = 40  # ruin-and-recreate rounds before branching
    search_seed: int = 0


@dataclass
class SolveReport:
    """Result of one solve.

    ``objective_W`` is the assignment program's objective, the sum of the
    requests' standalone costs taken in request-id order, so equivalent
    assignments score bit-identically.  ``breakdown`` is the same power
    aggregated per tier by the power model; the two agree to rounding.
    """

    assignment: dict[int, NodeRef]
    objective_W: float
    breakdown: PowerBreakdown
    proved_optimal: bool
    gap_W: float
    lower_bound_W: float
    status: str
    method: str
    nodes_explored: int = 0
    cpu_utilization: dict[NodeRef, float] = field(default_factory=dict)
    tier_counts: dict[Tier, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "status": self.status,
            "proved_optimal": self.proved_optimal,
            "objective_W": self.objective_W,
            "lower_bound_W": self.lower_bound_W,
            "gap_W": self.gap_W,
            "nodes_explored": self.nodes_explored,
            "power": self.breakdown.to_dict(),
            "tier_counts": {t.value: c for t, c in self.tier_counts.items()},
            "cpu_utilization": {n.label(): u for n, u in sorted(self.cpu_utilization.items(), key=lambda kv: kv[0].sort_key())},
            "assignment": [
                {"request": rid, "tier": node.tier.value, "node": node.index}
                for rid, node in sorted(self.assignment.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SolveReport":
        util = {}
        for label, u in d.get("cpu_utilization", {}).items():
            tier, idx = label.rstrip("]").split("[")
            util[NodeRef(Tier(tier), int(idx))] = u
        return cls(
            assignment=assignment_from_list(d["assignment"]),
            objective_W=float(d["objective_W"]),
            breakdown=PowerBreakdown.from_dict(d["power"]),
            proved_optimal=bool(d["proved_optimal"]),
            gap_W=float(d["gap_W"]),
            lower_bound_W=float(d["lower_bound_W"]),
            status=d["status"],
            method=d["method"],
            nodes_explored=int(d.get("nodes_explored", 0)),
            cpu_utilization=util,
            tier_counts={Tier(t): int(c) for t, c in d.get("tier_counts", {}).items()},
        )


def assignment_from_list(rows) -> dict[int, NodeRef]:
    return {int(r["request"]): NodeRef(Tier(r["tier"]), int(r["node"])) for r in rows}


# --------------------------------------------------------------------------
# compiled instance


class _Problem:
    """Dense, index-based view of one instance.

    Requests are kept in id order; nodes in tier order.  When the cloud is
    disabled a virtual overflow node with a prohibitive cost stands in for it
    during the search, so every partial move has somewhere to put requests.
    """

    def __init__(self, requests, scenario, deployment, catalog):
        self.catalog = catalog
        self.scenario = scenario
        self.deployment = deployment
        if scenario.vehicle_count and deployment.vehicle_count != scenario.vehicle_count:
            raise ModelError(
                f"deployment covers {deployment.vehicle_count} vehicles, scenario has {scenario.vehicle_count}"
            )
        ids = [r.id for r in requests]
        if len(set(ids)) != len(ids):
            raise ModelError("request ids must be unique")
        self.requests = sorted(requests, key=lambda r: r.id)
        self.nodes = scenario_nodes(scenario)
        self.node_pos = {nd: p for p, nd in enumerate(self.nodes)}
        paths = scenario.build_paths(catalog)
        self.paths = paths
        n_nodes = len(self.nodes)

        wifi = paths[Tier.VF].devices
        wifi_cap = min((d.capacity for d in wifi if d.name in PER_VEHICLE_DEVICES and d.enforce_capacity), default=INF)
        self.ccap, self.scap, self.ncap, self.tier = [], [], [], []
        for nd in self.nodes:
            spec = catalog.node(TIER_ROLE[nd.tier])
            if spec.role is NodeRole.CLOUD_SERVER:
                self.ccap.append(INF)
                self.scap.append(INF)
            else:
                self.ccap.append(spec.cpu_capacity)
                self.scap.append(spec.storage_capacity)
            self.ncap.append(wifi_cap if nd.tier is Tier.VF else INF)
            self.tier.append(nd.tier)

        # enforced devices shared by all requests whose path crosses them
        self.shared_cap = []
        self.shared_uses = []
        shared = {}
        for t, path in paths.items():
            for dev, _ in path.hops():
                if dev.enforce_capacity and dev.name not in PER_VEHICLE_DEVICES:
                    shared.setdefault(dev.name, (dev.capacity, set()))[1].add(t)
        for name in sorted(shared):
            cap, tiers = shared[name]
            self.shared_cap.append(cap)
            self.shared_uses.append([self.tier[p] in tiers for p in range(n_nodes)])

        self.cloud = self.node_pos.get(NodeRef(Tier.CLOUD, 0))
        self.n = len(self.requests)
        self.cpu = [r.cpu_demand for r in self.requests]
        self.sto = [r.storage_demand for r in self.requests]
        self.net = [r.net_demand for r in self.requests]

        tiers_present = sorted(set(self.tier), key=lambda t: t.order)
        tier_cost = [{t: request_power(r, t, paths, catalog) for t in tiers_present} for r in self.requests]
        self.cost = [[tc[self.tier[p]] for p in range(n_nodes)] for tc in tier_cost]

        if self.cloud is None:
            # overflow pool: dearer than any complete assignment
            big = 1.0 + 2.0 * sum(max(row, default=0.0) for row in self.cost)
            self.pool = n_nodes
            for row in self.cost:
                row.append(big)
            self.ccap.append(INF)
            self.scap.append(INF)
            self.ncap.append(INF)
            for uses in self.shared_uses:
                uses.append(False)
        else:
            self.pool = self.cloud
        self.n_slots = len(self.ccap)

        # candidate nodes: package held and the request fits the empty node
        self.cand = []
        for i, r in enumerate(self.requests):
            c = []
            for p, nd in enumerate(self.nodes):
                if nd.tier is Tier.VF and not deployment.holds(nd.index, r.package):
                    continue
                if self.cpu[i] > self.ccap[p] or self.sto[i] > self.scap[p] or self.net[i] > self.ncap[p]:
                    continue
                if any(uses[p] and self.net[i] > cap for uses, cap in zip(self.shared_uses, self.shared_cap)):
                    continue
                c.append(p)
            c.sort(key=lambda p: (self.cost[i][p], p))
            self.cand.append(c)
        self.cand_set = [set(c) for c in self.cand]

        # nodes that are interchangeable: same tier and (for vehicles) same packages
        self.sym_class = []
        for nd in self.nodes:
            key = (nd.tier, deployment.packages[nd.index]) if nd.tier is Tier.VF else (nd.tier,)
            self.sym_class.append(key)
        self.sym_class.append(("pool",))
        # capacity groups for the lower bound: one per class of capacitated nodes
        gids: dict[tuple, int] = {}
        self.group = []
        for p_, nd in enumerate(self.nodes):
            if nd.tier is Tier.CLOUD:
                self.group.append(-1)
            else:
                self.group.append(gids.setdefault(self.sym_class[p_], len(gids)))
        self.n_groups = len(gids)

    def objective(self, x) -> float:
        total = 0.0
        for i in range(self.n):
            total += self.cost[i][x[i]]
        return total

    def feasible(self, x) -> bool:
        cpu = [0.0] * self.n_slots
        sto = [0.0] * self.n_slots
        net = [0.0] * self.n_slots
        shared = [0.0] * len(self.shared_cap)
        for i, p in enumerate(x):
            if p != self.pool and p not in self.cand_set[i]:
                return False
            cpu[p] += self.cpu[i]
            sto[p] += self.sto[i]
            net[p] += self.net[i]
            for s, uses in enumerate(self.shared_uses):
                if uses[p]:
                    shared[s] += self.net[i]
        for p in range(self.n_slots):
            if cpu[p] > self.ccap[p] + _FEAS_TOL or sto[p] > self.scap[p] + _FEAS_TOL or net[p] > self.ncap[p] + _FEAS_TOL:
                return False
        return all(load <= cap + _FEAS_TOL for load, cap in zip(shared, self.shared_cap))

    def complete(self, x) -> bool:
        return self.cloud is not None or all(p != self.pool for p in x)

    def canonical(self, x) -> list[int]:
        """Relabel interchangeable nodes so the assignment is lexicographically smallest."""
        classes: dict[tuple, list[int]] = {}
        for p, key in enumerate(self.sym_class):
            classes.setdefault(key, []).append(p)
        mapping: dict[int, int] = {}
        used: dict[tuple, int] = {}
        for p in x:
            if p in mapping:
                continue
            key = self.sym_class[p]
            k = used.get(key, 0)
            mapping[p] = classes[key][k]
            used[key] = k + 1
        return [mapping[p] for p in x]

    def from_assignment(self, assignment: Mapping[int, NodeRef]):
        x = []
        for r in self.requests:
            node = assignment.get(r.id)
            if node is None or node not in self.node_pos:
                return None
            x.append(self.node_pos[node])
        return x

    def to_assignment(self, x) -> dict[int, NodeRef]:
        return {r.id: self.nodes[p] for r, p in zip(self.requests, x)}


# --------------------------------------------------------------------------
# incumbent search


def _knapsack(cands, ccap, scap, ncap, budget=20_000):
    """Best-value subset of ``(value, cpu, sto, net, item)`` within three capacities.

    Depth-first with the fractional CPU bound; stops after ``budget`` nodes
    and returns the best subset seen.
    """
    cands = sorted(cands, key=lambda t: (-t[0] / t[1], t[4]))
    n = len(cands)
    best_val = 0.0
    best_set: list[int] = []
    chosen: list[int] = []
    visited = 0

    def upper(k, c0, v):
        for val, w, _s, _n, _i in cands[k:]:
            if w <= c0:
                c0 -= w
                v += val
            else:
                return v + val * c0 / w
        return v

    def rec(k, c0, c1, c2, v):
        nonlocal best_val, best_set, visited
        visited += 1
        if v > best_val + 1e-12:
            best_val = v
            best_set = list(chosen)
        if k == n or visited > budget or upper(k, c0, v) <= best_val + 1e-12:
            return
        val, w, s, m, item = cands[k]
        if w <= c0 + _FEAS_TOL and s <= c1 + _FEAS_TOL and m <= c2 + _FEAS_TOL:
            chosen.append(item)
            rec(k + 1, c0 - w, c1 - s, c2 - m, v + val)
            chosen.pop()
        rec(k + 1, c0, c1, c2, v)

    rec(0, ccap, scap, ncap, 0.0)
    return best_val, best_set


class _LocalSearch:
    """Improvement heuristics over complete assignments of a :class:`_Problem`."""

    def __init__(self, prob: _Problem, x):
        self.p = prob
        self.reset(x)
        self.non_pool = [q for q in range(len(prob.nodes)) if q != prob.pool]
        self.fog = [q for q in self.non_pool if prob.tier[q] is Tier.FIXED_FOG]

    def reset(self, x):
        p = self.p
        self.x = list(x)
        self.lc = [0.0] * p.n_slots
        self.ls = [0.0] * p.n_slots
        self.ln = [0.0] * p.n_slots
        self.lsh = [0.0] * len(p.shared_cap)
        self.members = [set() for _ in range(p.n_slots)]
        for i, q in enumerate(self.x):
            self._add(i, q)

    def _add(self, i, q):
        p = self.p
        self.lc[q] += p.cpu[i]
        self.ls[q] += p.sto[i]
        self.ln[q] += p.net[i]
        for s, uses in enumerate(p.shared_uses):
            if uses[q]:
                self.lsh[s] += p.net[i]
        self.members[q].add(i)

    def _remove(self, i, q):
        p = self.p
        self.lc[q] -= p.cpu[i]
        self.ls[q] -= p.sto[i]
        self.ln[q] -= p.net[i]
        for s, uses in enumerate(p.shared_uses):
            if uses[q]:
                self.lsh[s] -= p.net[i]
        self.members[q].discard(i)

    def move(self, i, q):
        self._remove(i, self.x[i])
        self.x[i] = q
        self._add(i, q)

    def fits(self, i, q, out=-1):
        """Whether request ``i`` fits node ``q``, optionally after request ``out`` leaves ``q``."""
        p = self.p
        c, s, n = p.cpu[i], p.sto[i], p.net[i]
        if out >= 0:
            c -= p.cpu[out]
            s -= p.sto[out]
            n -= p.net[out]
        if self.lc[q] + c > p.ccap[q] + _FEAS_TOL or self.ls[q] + s > p.scap[q] + _FEAS_TOL:
            return False
        if self.ln[q] + n > p.ncap[q] + _FEAS_TOL:
            return False
        if p.shared_cap:
            a = self.x[i]
            for si, uses in enumerate(p.shared_uses):
                if uses[q] and not uses[a] and self.lsh[si] + p.net[i] > p.shared_cap[si] + _FEAS_TOL:
                    return False
        return True

    def shared_ok(self) -> bool:
        return all(load <= cap + _FEAS_TOL for load, cap in zip(self.lsh, self.p.shared_cap))

    def value(self) -> float:
        return self.p.objective(self.x)

    def insert(self, items):
        """Move pooled requests to their cheapest feasible node, most valuable per MHz first."""
        p = self.p
        pool = p.pool

        def density(i):
            best = p.cost[i][p.cand[i][0]] if p.cand[i] else p.cost[i][pool]
            return (-(p.cost[i][pool] - best) / p.cpu[i], i)

        for i in sorted(items, key=density):
            if self.x[i] != pool:
                continue
            for q in p.cand[i]:
                if q == pool or p.cost[i][q] >= p.cost[i][pool]:
                    break
                if self.fits(i, q):
                    self.move(i, q)
                    break

    def relocate_pass(self) -> bool:
        p = self.p
        improved = False
        for i in range(p.n):
            a = self.x[i]
            ca = p.cost[i][a]
            for q in p.cand[i]:
                if p.cost[i][q] >= ca - 1e-12:
                    break
                if q != a and self.fits(i, q):
                    self.move(i, q)
                    improved = True
                    break
        return improved

    def swap_pass(self) -> bool:
        p = self.p
        improved = False
        cost = p.cost
        for i in range(p.n):
            for j in range(i + 1, p.n):
                a, b = self.x[i], self.x[j]
                if a == b:
                    continue
                delta = cost[i][b] + cost[j][a] - cost[i][a] - cost[j][b]
                if delta >= -1e-12:
                    continue
                if (b == p.pool or b in p.cand_set[i]) and (a == p.pool or a in p.cand_set[j]):
                    if self.fits(i, b, j) and self.fits(j, a, i):
                        self.move(i, b)
                        self.move(j, a)
                        if not self.shared_ok():
                            self.move(i, a)
                            self.move(j, b)
                            continue
                        improved = True
        return improved

    def refill(self, q, prices=None) -> bool:
        """Re-choose the contents of node ``q`` exactly (knapsack over all movable requests).

        Current members are valued as if sent to the pool.  With ``prices`` a
        request taken from another node also earns ``prices[tier] * cpu`` for
        the capacity it frees there; the move is then only kept if the real
        objective improves after the freed space is refilled.
        """
        p = self.p
        pool = p.pool
        cost = p.cost
        cands = []
        for i in range(p.n):
            if q not in p.cand_set[i]:
                continue
            src = pool if self.x[i] == q else self.x[i]
            v = cost[i][src] - cost[i][q]
            if prices is not None and src != pool and p.tier[src] is not p.tier[q]:
                v += prices.get(p.tier[src], 0.0) * p.cpu[i]
            if v > 1e-12:
                cands.append((v, p.cpu[i], p.sto[i], p.net[i], i))
        current = sum(cost[i][pool] - cost[i][q] for i in self.members[q])
        if prices is None:
            best, chosen = _knapsack(cands, p.ccap[q], p.scap[q], p.ncap[q])
            if best <= current + 1e-9:
                return False
            before = self.value()
            snapshot = list(self.x)
            for i in list(self.members[q]):
                self.move(i, pool)
            for i in chosen:
                self.move(i, q)
            self.insert(list(self.members[pool]))
            if self.shared_ok() and self.value() < before - 1e-9:
                return True
            self.reset(snapshot)
            return False

        best, chosen = _knapsack(cands, p.ccap[q], p.scap[q], p.ncap[q])
        if not chosen or set(chosen) == self.members[q]:
            return False
        before = self.value()
        snapshot = list(self.x)
        for i in list(self.members[q]):
            self.move(i, pool)
        for i in chosen:
            self.move(i, q)
        for f in self.non_pool:
            if f != q and p.tier[f] is not p.tier[q]:
                self.refill(f)
        self.insert(list(self.members[pool]))
        if self.shared_ok() and self.value() < before - 1e-9:
            return True
        self.reset(snapshot)
        return False

    def tier_prices(self) -> dict:
        """Value per MHz of the best pooled request each tier could still absorb."""
        p = self.p
        prices = {}
        pool = p.pool
        for q in self.non_pool:
            t = p.tier[q]
            best = prices.get(t, 0.0)
            for i in self.members[pool]:
                if q in p.cand_set[i]:
                    best = max(best, (p.cost[i][pool] - p.cost[i][q]) / p.cpu[i])
            prices[t] = best
        return prices

    def pair_refill(self, a, b) -> bool:
        p = self.p
        before = self.value()
        snapshot = list(self.x)
        for q in (a, b):
            for i in list(self.members[q]):
                self.move(i, p.pool)
        self.refill(a)
        self.refill(b)
        self.insert(list(self.members[p.pool]))
        if self.shared_ok() and self.value() < before - 1e-9:
            return True
        self.reset(snapshot)
        return False

    def descend(self):
        while True:
            if self.relocate_pass() or self.swap_pass():
                continue
            changed = False
            for q in self.non_pool:
                changed |= self.refill(q)
            if changed:
                continue
            prices = self.tier_prices()
            if any(v > 0 for v in prices.values()):
                for q in self.non_pool:
                    if self.p.tier[q] is Tier.VF:
                        changed |= self.refill(q, prices)
            for k, a in enumerate(self.fog):
                for b in self.fog[k + 1:]:
                    changed |= self.pair_refill(a, b)
            if not changed:
                return

    def run(self, rounds: int, seed: int, deadline: float):
        """Descend, then ruin-and-recreate: empty two random nodes, reinsert, descend."""
        self.descend()
        best_x, best_val = list(self.x), self.value()
        rng = random.Random(seed)
        if not self.non_pool:
            return best_x, best_val
        for _ in range(rounds):
            if time.monotonic() > deadline:
                break
            for _ in range(2):
                q = self.non_pool[min(int(rng.random() * len(self.non_pool)), len(self.non_pool) - 1)]
                for i in list(self.members[q]):
                    self.move(i, self.p.pool)
            self.insert(list(self.members[self.p.pool]))
            self.descend()
            val = self.value()
            if val < best_val - 1e-9:
                best_x, best_val = list(self.x), val
            elif val > best_val + 1e-9:
                self.reset(best_x)
        return best_x, best_val


def _greedy(prob: _Problem, key) -> list[int]:
    """Place requests in ``key`` order, each on its cheapest currently feasible node."""
    ls = _LocalSearch(prob, [prob.pool] * prob.n)
    for i in sorted(range(prob.n), key=key):
        for q in prob.cand[i]:
            if ls.fits(i, q):
                ls.move(i, q)
                break
    return ls.x


# --------------------------------------------------------------------------
# lower bound


# subgradient steps without improvement before the step size is halved
_STALL = 80


def _lagrangian_bound(prob: _Problem, rem, rc, rs, rn, prices, rounds=2, steps=0, target=INF):
    """Lower bound on the cost of serving ``rem`` given residual capacities.

    Capacities are pooled per group of interchangeable nodes (same tier and,
    for vehicles, same packages).  Placing a request in a group costs its
    standalone power plus ``price * demand`` for the group's pooled CPU (and
    WiFi); the priced capacity is credited back.  Any non-negative prices
    give a valid bound.  Prices are improved by exact coordinate line
    searches starting from ``prices``, then by up to ``steps`` subgradient
    steps aimed at ``target``.  Returns the best bound seen and its prices.
    """
    cloud = prob.cloud
    n_groups = prob.n_groups
    group = prob.group
    cpu, net = prob.cpu, prob.net
    useful_cpu = [0.0] * len(prob.nodes)
    useful_net = [0.0] * len(prob.nodes)

    options = []  # (request, {group: standalone cost}) over groups it still fits
    for i in rem:
        opts = {}
        ci, si, ni = cpu[i], prob.sto[i], net[i]
        for q in prob.cand[i]:
            if q == cloud:
                continue
            if ci <= rc[q] + _FEAS_TOL and si <= rs[q] + _FEAS_TOL and ni <= rn[q] + _FEAS_TOL:
                g = group[q]
                if g not in opts:
                    opts[g] = prob.cost[i][q]
                useful_cpu[q] += ci
                useful_net[q] += ni
        if not opts and cloud is None:
            return INF, prices
        options.append((i, opts))

    cap_cpu = [0.0] * n_groups
    cap_net = [0.0] * n_groups
    net_finite = [True] * n_groups
    for q, g in enumerate(group):
        if g < 0:
            continue
        cap_cpu[g] += min(rc[q], useful_cpu[q])
        if rn[q] == INF:
            net_finite[g] = False
        else:
            cap_net[g] += min(rn[q], useful_net[q])

    used = sorted({g for _, opts in options for g in opts})
    keys = [(g, "cpu") for g in used] + [(g, "net") for g in used if net_finite[g]]
    cap = {(g, "cpu"): cap_cpu[g] for g in used}
    cap.update({(g, "net"): cap_net[g] for g in used if net_finite[g]})
    lam = {key: (prices or {}).get(key, 0.0) for key in keys}
    lc = [0.0] * n_groups
    ln = [0.0] * n_groups

    def sync():
        for (g, res), v in lam.items():
            if res == "cpu":
                lc[g] = v
            else:
                ln[g] = v

    cloud_cost = [prob.cost[i][cloud] if cloud is not None else INF for i in range(prob.n)]

    def evaluate():
        """Bound at the current prices and a subgradient."""
        total = 0.0
        grad = {key: -cap[key] for key in keys}
        for i, opts in options:
            best, arg = cloud_cost[i], -1
            ci, ni = cpu[i], net[i]
            for g, base in opts.items():
                v = base + lc[g] * ci + ln[g] * ni
                if v < best:
                    best, arg = v, g
            if best == INF:
                return INF, grad
            total += best
            if arg >= 0:
                grad[(arg, "cpu")] += ci
                if net_finite[arg]:
                    grad[(arg, "net")] += ni
        for key in keys:
            total -= lam[key] * cap[key]
        return total, grad

    sync()
    for _ in range(rounds):
        for key in keys:
            g, res = key
            w_of = cpu if res == "cpu" else net
            ratios = []
            for i, opts in options:
                if g not in opts:
                    continue
                ci, ni = cpu[i], net[i]
                other = cloud_cost[i]
                for h, base in opts.items():
                    if h != g:
                        v = base + lc[h] * ci + ln[h] * ni
                        if v < other:
                            other = v
                own = opts[g] + (ln[g] * ni if res == "cpu" else lc[g] * ci)
                gain = other - own
                if gain > 0:
                    ratios.append((gain / w_of[i], w_of[i]))
            ratios.sort(reverse=True)
            price = 0.0
            total_w = 0.0
            for ratio, w in ratios:
                total_w += w
                if total_w > cap[key] + _FEAS_TOL:
                    price = ratio
                    break
            if price == INF:
                return INF, lam
            lam[key] = price
            sync()

    best_val, grad = evaluate()
    best_lam = dict(lam)
    theta = 1.0
    stall = 0
    for _ in range(steps):
        if best_val >= target or best_val == INF:
            break
        norm = sum(grad[key] ** 2 for key in keys)
        if norm == 0.0:
            break
        step = theta * (target - best_val) / norm if target < INF else theta * 1e-4
        for key in keys:
            lam[key] = max(0.0, lam[key] + step * grad[key])
        sync()
        val, grad = evaluate()
        if val > best_val + 1e-12:
            best_val, best_lam = val, dict(lam)
            stall = 0
        else:
            stall += 1
            if stall >= _STALL:
                theta *= 0.5
                stall = 0
                lam = dict(best_lam)
                sync()
                val, grad = evaluate()
    return best_val, best_lam


def _residuals(prob: _Problem, fixed):
    rc = list(prob.ccap[: len(prob.nodes)])
    rs = list(prob.scap[: len(prob.nodes)])
    rn = list(prob.ncap[: len(prob.nodes)])
    shared = [0.0] * len(prob.shared_cap)
    for i, q in fixed:
        rc[q] -= prob.cpu[i]
        rs[q] -= prob.sto[i]
        rn[q] -= prob.net[i]
        for s, uses in enumerate(prob.shared_uses):
            if uses[q]:
                shared[s] += prob.net[i]
    return rc, rs, rn, shared


def root_bound(prob: _Problem, target: float = INF) -> float:
    rc, rs, rn, _ = _residuals(prob, [])
    bound, _ = _lagrangian_bound(prob, range(prob.n), rc, rs, rn, None, rounds=4, steps=1000, target=target)
    return bound


# --------------------------------------------------------------------------
# branch and bound


def _branch_and_bound(prob: _Problem, inc_x, inc_val, limits: SolveLimits, deadline: float):
    """Best-first search; returns (x, value, global lower bound, expansions, status)."""
    n = prob.n
    pool = prob.pool
    order = sorted(
        range(n),
        key=lambda i: (-(prob.cost[i][pool] - (prob.cost[i][prob.cand[i][0]] if prob.cand[i] else prob.cost[i][pool])), i),
    )

    def tol(v):
        return 1e-9 * max(1.0, abs(v))

    tie = count()
    root, root_prices = _lagrangian_bound(
        prob, order, *_residuals(prob, [])[:3], None, rounds=4, steps=1000, target=inc_val
    )
    # entries: (bound, -depth, tiebreak, evaluated, choices, cost, prices)
    heap = [(root, 0, next(tie), True, (), 0.0, root_prices)]
    expanded = 0
    status = "optimal"

    while heap:
        bound, negdepth, _, evaluated, choices, cost, prices = heap[0]
        if bound >= inc_val - tol(inc_val):
            heap = []
            break
        if expanded >= limits.node_limit:
            status = "node_limit"
            break
        if time.monotonic() > deadline:
            status = "time_limit"
            break
        heapq.heappop(heap)
        depth = -negdepth
        fixed = list(zip(order, choices))
        rc, rs, rn, shared = _residuals(prob, fixed)
        if not evaluated:
            rest, prices = _lagrangian_bound(
                prob, order[depth:], rc, rs, rn, prices, rounds=1, steps=5, target=inc_val - cost
            )
            lb = max(bound, cost + rest)
            if lb >= inc_val - tol(inc_val):
                continue
            if heap and lb > heap[0][0]:
                heapq.heappush(heap, (lb, negdepth, next(tie), True, choices, cost, prices))
                continue
            bound = lb
        expanded += 1

        i = order[depth]
        seen = set()
        for q in prob.cand[i]:
            if prob.cpu[i] > rc[q] + _FEAS_TOL or prob.sto[i] > rs[q] + _FEAS_TOL or prob.net[i] > rn[q] + _FEAS_TOL:
                continue
            if any(uses[q] and load + prob.net[i] > cap + _FEAS_TOL
                   for uses, load, cap in zip(prob.shared_uses, shared, prob.shared_cap)):
                continue
            key = (prob.sym_class[q], rc[q], rs[q], rn[q])
            if key in seen:
                continue
            seen.add(key)
            child_cost = cost + prob.cost[i][q]
            child = choices + (q,)
            if depth + 1 == n:
                if child_cost < inc_val - tol(inc_val):
                    x = [0] * n
                    for k, c in zip(order, child):
                        x[k] = c
                    val = prob.objective(x)
                    if val < inc_val:
                        inc_x, inc_val = x, val
                continue
            est = max(bound, child_cost)
            if est < inc_val - tol(inc_val):
                heapq.heappush(heap, (est, -(depth + 1), next(tie), False, child, child_cost, prices))

    lower = min(inc_val, heap[0][0]) if heap else inc_val
    return inc_x, inc_val, lower, expanded, status


# --------------------------------------------------------------------------
# public entry points


def _prepare(requests, scenario, deployment, catalog):
    catalog = catalog or default_catalog()
    scenario = validate_scenario(scenario, catalog)
    return _Problem(requests, scenario, deployment, catalog)


def _report(prob: _Problem, x, lower, proved, status, method, expanded) -> SolveReport:
    if not prob.complete(x) or not prob.feasible(x):
        raise Infeasible("no feasible assignment found")
    x = prob.canonical(x)
    assignment = prob.to_assignment(x)
    breakdown = total_power(assignment, prob.requests, prob.scenario, prob.deployment, prob.catalog)
    objective = prob.objective(x)
    lower = min(lower, objective)
    counts = {t: 0 for t in (Tier.VF, Tier.FIXED_FOG, Tier.CLOUD)}
    load = [0.0] * len(prob.nodes)
    for i, q in enumerate(x):
        counts[prob.tier[q]] += 1
        load[q] += prob.cpu[i]
    util = {nd: load[q] / prob.ccap[q] for q, nd in enumerate(prob.nodes) if nd.tier is not Tier.CLOUD}
    return SolveReport(
        assignment=assignment,
        objective_W=objective,
        breakdown=breakdown,
        proved_optimal=proved,
        gap_W=0.0 if proved else max(0.0, objective - lower),
        lower_bound_W=objective if proved else lower,
        status=status,
        method=method,
        nodes_explored=expanded,
        cpu_utilization=util,
        tier_counts=counts,
    )


def solve_exact(
    requests: Sequence[Request],
    scenario: Scenario,
    deployment: Deployment,
    catalog: Catalog | None = None,
    limits: SolveLimits = SolveLimits(),
    warm_starts: Sequence[Mapping[int, NodeRef]] = (),
    raise_on_limit: bool = False,
) -> SolveReport:
    """Minimum-power assignment by branch-and-bound.

    ``warm_starts`` are candidate assignments (e.g. from a related instance);
    those that are feasible here seed the incumbent.  If a limit stops the
    search the best assignment found is returned with ``proved_optimal``
    false and a positive ``gap_W``, unless ``raise_on_limit`` is set.
    """
    start = time.monotonic()
    deadline = start + limits.time_limit
    prob = _prepare(requests, scenario, deployment, catalog)
    if prob.n == 0:
        return _report(prob, [], 0.0, True, "optimal", "branch_and_bound", 0)
    if prob.cloud is None and any(not c for c in prob.cand):
        raise Infeasible("some request fits no node")

    starts = [
        _greedy(prob, lambda i: (-prob.cpu[i], i)),
        _greedy(prob, lambda i: (-(prob.cost[i][prob.pool] - prob.cost[i][prob.cand[i][0]]) / prob.cpu[i] if prob.cand[i] else 0.0, i)),
    ]
    for ws in warm_starts:
        x = prob.from_assignment(ws)
        if x is not None and prob.feasible(x):
            starts.append(x)
    inc_x = min(starts, key=lambda x: (prob.objective(x), prob.canonical(x)))
    inc_x, inc_val = _LocalSearch(prob, inc_x).run(limits.search_rounds, limits.search_seed, deadline)

    x, val, lower, expanded, status = _branch_and_bound(prob, inc_x, inc_val, limits, deadline)
    proved = status == "optimal"
    report = _report(prob, x, lower, proved, status, "branch_and_bound", expanded)
    if raise_on_limit and not proved:
        raise TimeLimitExceeded(report)
    return report


def greedy_baseline(
    requests: Sequence[Request],
    scenario: Scenario,
    deployment: Deployment,
    catalog: Catalog | None = None,
) -> SolveReport:
    """Largest CPU demand first, each request to its cheapest currently feasible node."""
    prob = _prepare(requests, scenario, deployment, catalog)
    if prob.n == 0:
        return _report(prob, [], 0.0, True, "optimal", "greedy", 0)
    x = _greedy(prob, lambda i: (-prob.cpu[i], prob.requests[i].id))
    if not prob.complete(x):
        raise Infeasible("greedy placement left requests without a node")
    val = prob.objective(x)
    lower = root_bound(prob, val)
    proved = lower >= val - 1e-9 * max(1.0, val)
    return _report(prob, x, lower, proved, "optimal" if proved else "heuristic", "greedy", 0)


ORACLE_MAX_REQUESTS = 8
ORACLE_MAX_NODES = 6


def brute_force_oracle(
    requests: Sequence[Request],
    scenario: Scenario,
    deployment: Deployment,
    catalog: Catalog | None = None,
) -> SolveReport:
    """Exhaustive enumeration of every feasible assignment (test oracle)."""
    catalog = catalog or default_catalog()
    scenario = validate_scenario(scenario, catalog)
    nodes = scenario_nodes(scenario)
    if len(requests) > ORACLE_MAX_REQUESTS or len(nodes) > ORACLE_MAX_NODES:
        raise InstanceTooLarge(
            f"{len(requests)} requests x {len(nodes)} nodes exceeds the oracle limit "
            f"({ORACLE_MAX_REQUESTS} x {ORACLE_MAX_NODES})"
        )
    reqs = sorted(requests, key=lambda r: r.id)
    paths = scenario.build_paths(catalog)
    price = {(r.id, t): request_power(r, t, paths, catalog) for r in reqs for t in {nd.tier for nd in nodes}}

    def cap(node):
        spec = catalog.node(TIER_ROLE[node.tier])
        if node.tier is Tier.CLOUD:
            return INF, INF, INF
        wifi = INF
        if node.tier is Tier.VF:
            for dev, _ in paths[Tier.VF].hops():
                if dev.name in PER_VEHICLE_DEVICES and dev.enforce_capacity:
                    wifi = min(wifi, dev.capacity)
        return spec.cpu_capacity, spec.storage_capacity, wifi

    caps = {nd: cap(nd) for nd in nodes}
    shared = []
    for name in sorted({d.name for p in paths.values() for d, _ in p.hops() if d.enforce_capacity} - PER_VEHICLE_DEVICES):
        tiers = {t for t, p in paths.items() if any(d.name == name for d, _ in p.hops())}
        shared.append((catalog.device(name).capacity, tiers))

    best_val = INF
    best: list[NodeRef] | None = None
    loads = {nd: [0.0, 0.0, 0.0] for nd in nodes}
    chosen: list[NodeRef] = []

    def ok_shared():
        for capacity, tiers in shared:
            if sum(r.net_demand for r, nd in zip(reqs, chosen) if nd.tier in tiers) > capacity:
                return False
        return True

    def rec(k):
        nonlocal best_val, best
        if k == len(reqs):
            if not ok_shared():
                return
            val = 0.0
            for r, nd in zip(reqs, chosen):
                val += price[(r.id, nd.tier)]
            if val < best_val:
                best_val, best = val, list(chosen)
            return
        r = reqs[k]
        for nd in nodes:
            if nd.tier is Tier.VF and not deployment.holds(nd.index, r.package):
                continue
            load = loads[nd]
            c, s, w = caps[nd]
            if load[0] + r.cpu_demand > c or load[1] + r.storage_demand > s or load[2] + r.net_demand > w:
                continue
            load[0] += r.cpu_demand
            load[1] += r.storage_demand
            load[2] += r.net_demand
            chosen.append(nd)
            rec(k + 1)
            chosen.pop()
            load[0] -= r.cpu_demand
            load[1] -= r.storage_demand
            load[2] -= r.net_demand

    rec(0)
    if best is None:
        raise Infeasible("no feasible assignment exists")
    assignment = {r.id: nd for r, nd in zip(reqs, best)}
    breakdown = total_power(assignment, reqs, scenario, deployment, catalog)
    counts = {t: 0 for t in (Tier.VF, Tier.FIXED_FOG, Tier.CLOUD)}
    for nd in best:
        counts[nd.tier] += 1
    util = {}
    for nd in nodes:
        if nd.tier is not Tier.CLOUD:
            used = sum(r.cpu_demand for r, m in zip(reqs, best) if m == nd)
            util[nd] = used / caps[nd][0]
    return SolveReport(assignment, best_val, breakdown, True, 0.0, best_val, "optimal", "brute_force", 0, util, counts)
