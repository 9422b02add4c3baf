import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vfogmatch.deployment import Deployment, make_deployment, same_type_deployment
from vfogmatch.harness import small_instance
from vfogmatch.model import NodeRef, Request, Scenario, Tier, default_catalog
from vfogmatch.optimizer import (
    Infeasible,
    InstanceTooLarge,
    SolveLimits,
    SolveReport,
    TimeLimitExceeded,
    brute_force_oracle,
    greedy_baseline,
    solve_exact,
)
from vfogmatch.power import total_power
from vfogmatch.validator import check_assignment, recompute_power, relative_difference
from vfogmatch.workload import WorkloadConfig, generate_requests

REL = 1e-9


def close(a, b, rel=REL):
    if a == b:
        return True
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def value(solver, *instance):
    """Optimal power, or inf when the solver proves there is no feasible assignment."""
    try:
        return solver(*instance).objective_W
    except Infeasible:
        return float("inf")


def test_cloud_scenario_sends_everything_to_the_cloud():
    reqs = generate_requests(0, WorkloadConfig(n_requests=10))
    rep = solve_exact(reqs, Scenario.named("Cloud"), same_type_deployment(0, 1))
    assert all(n.tier is Tier.CLOUD for n in rep.assignment.values())
    assert rep.proved_optimal and rep.gap_W == 0.0


def test_request_too_big_for_a_vehicle_leaves_the_vf():
    reqs = [Request(0, 300.0, 10.0, 10.0, 1)]
    scen = Scenario(vehicle_count=3, fog_server_count=0)
    for solver in (solve_exact, greedy_baseline, brute_force_oracle):
        assert solver(reqs, scen, same_type_deployment(3, 10)).assignment[0].tier is Tier.CLOUD


def test_oracle_picks_the_cheaper_node():
    reqs = [Request(0, 100.0, 10.0, 10.0, 1)]
    rep = brute_force_oracle(reqs, Scenario(fog_server_count=1), same_type_deployment(0, 1))
    assert rep.assignment[0] == NodeRef(Tier.FIXED_FOG, 0)


def test_hand_instance_matches_oracle():
    # two vehicles holding {1} and {2}; the vehicles fit only one 200 MHz task each
    reqs = [
        Request(0, 200.0, 20.0, 100.0, 1),
        Request(1, 200.0, 20.0, 100.0, 1),
        Request(2, 150.0, 20.0, 100.0, 2),
        Request(3, 60.0, 40.0, 100.0, 2),
    ]
    dep = Deployment((frozenset({1}), frozenset({2})), k=1, n_packages=2)
    scen = Scenario(vehicle_count=2, fog_server_count=1)
    exact = solve_exact(reqs, scen, dep)
    oracle = brute_force_oracle(reqs, scen, dep)
    assert exact.proved_optimal
    assert close(exact.objective_W, oracle.objective_W)
    # request 3 cannot share vehicle 1 with request 2: 150 + 60 <= 240 but 20 + 40 > 54 Mbps
    assert not check_assignment(exact.assignment, reqs, scen, dep)
    on_v1 = [i for i, n in exact.assignment.items() if n == NodeRef(Tier.VF, 1)]
    assert on_v1 != [2, 3]


@pytest.mark.parametrize("seed", range(0, 60))
def test_exact_matches_oracle_on_small_instances(seed):
    reqs, scen, dep, cat = small_instance(seed)
    try:
        oracle = brute_force_oracle(reqs, scen, dep, cat)
    except Infeasible:
        with pytest.raises(Infeasible):
            solve_exact(reqs, scen, dep, cat)
        return
    exact = solve_exact(reqs, scen, dep, cat)
    assert exact.proved_optimal
    assert close(exact.objective_W, oracle.objective_W)
    assert not check_assignment(exact.assignment, reqs, scen, dep, cat)


@pytest.mark.parametrize("seed", range(0, 200, 5))
def test_greedy_never_beats_exact(seed):
    reqs, scen, dep, cat = small_instance(seed)
    try:
        g = greedy_baseline(reqs, scen, dep, cat)
    except Infeasible:
        return  # greedy may miss packings that exist
    e = solve_exact(reqs, scen, dep, cat)
    assert g.objective_W >= e.objective_W - 1e-9
    assert not check_assignment(g.assignment, reqs, scen, dep, cat)


def test_single_request_greedy_is_optimal():
    reqs = generate_requests(3, WorkloadConfig(n_requests=1))
    scen = Scenario.named("CloudFogVF2")
    dep = same_type_deployment(10, 10)
    assert close(greedy_baseline(reqs, scen, dep).objective_W, solve_exact(reqs, scen, dep).objective_W)


def test_empty_workload():
    rep = solve_exact([], Scenario.named("CloudFogVF1"), same_type_deployment(5, 3))
    assert rep.objective_W == 0.0 and rep.assignment == {} and rep.proved_optimal


def test_oracle_refuses_large_instances():
    reqs = generate_requests(0, WorkloadConfig(n_requests=9))
    with pytest.raises(InstanceTooLarge):
        brute_force_oracle(reqs, Scenario(fog_server_count=1), same_type_deployment(0, 1))


def test_infeasible_without_cloud():
    reqs = [Request(0, 3000.0, 10.0, 10.0, 1)]
    scen = Scenario(vehicle_count=1, fog_server_count=1, cloud_enabled=False)
    with pytest.raises(Infeasible):
        solve_exact(reqs, scen, same_type_deployment(1, 1))
    with pytest.raises(Infeasible):
        brute_force_oracle(reqs, scen, same_type_deployment(1, 1))


def test_cloudless_instance_packs_capacity():
    cat = default_catalog().with_overrides({"nodes": {"fog_server": {"cpu_capacity": 400.0}}})
    reqs = [Request(i, 190.0, 10.0, 10.0, 1) for i in range(4)]
    scen = Scenario(vehicle_count=2, fog_server_count=1, cloud_enabled=False)
    dep = same_type_deployment(2, 1)
    rep = solve_exact(reqs, scen, dep, cat)
    assert rep.tier_counts[Tier.VF] == 2 and rep.tier_counts[Tier.FIXED_FOG] == 2
    assert close(rep.objective_W, brute_force_oracle(reqs, scen, dep, cat).objective_W)


def _mid_instance(seed, vehicles=5, k=3, policy="same_type"):
    reqs = generate_requests(seed, WorkloadConfig(n_requests=20))
    scen = Scenario(name="mid", vehicle_count=vehicles)
    return reqs, scen, make_deployment(policy, vehicles, k, seed)


BUDGET = SolveLimits(node_limit=300, search_rounds=10)


def test_solve_is_deterministic():
    a = solve_exact(*_mid_instance(1, policy="random_type"), limits=BUDGET)
    b = solve_exact(*_mid_instance(1, policy="random_type"), limits=BUDGET)
    assert a.to_dict() == b.to_dict()


def test_report_round_trip_and_consistency():
    reqs, scen, dep = _mid_instance(2)
    rep = solve_exact(reqs, scen, dep, limits=BUDGET)
    back = SolveReport.from_dict(json.loads(json.dumps(rep.to_dict())))
    assert back.assignment == rep.assignment
    assert back.objective_W == rep.objective_W
    assert relative_difference(recompute_power(rep.assignment, reqs, scen).total_W, rep.objective_W) < 1e-9
    assert relative_difference(total_power(rep.assignment, reqs, scen, dep).total_W, rep.objective_W) < 1e-9
    assert rep.gap_W >= 0.0
    assert rep.lower_bound_W <= rep.objective_W + 1e-9
    assert sum(rep.tier_counts.values()) == len(reqs)
    assert all(0.0 <= u <= 1.0 + 1e-12 for u in rep.cpu_utilization.values())


def test_warm_start_never_hurts():
    reqs, scen, dep = _mid_instance(4, vehicles=8, k=2, policy="random_type")
    tight = SolveLimits(node_limit=0, search_rounds=0)
    cold = solve_exact(reqs, scen, dep, limits=tight)
    good = solve_exact(reqs, scen, dep, limits=BUDGET)
    warm = solve_exact(reqs, scen, dep, limits=tight, warm_starts=[good.assignment])
    assert warm.objective_W <= min(cold.objective_W, good.objective_W) + 1e-9


def test_limits_report_a_gap_or_raise():
    reqs = generate_requests(0)
    scen = Scenario.named("CloudFogVF3")
    dep = make_deployment("random_type", 20, 2, 0)
    limits = SolveLimits(node_limit=1, search_rounds=0)
    rep = solve_exact(reqs, scen, dep, limits=limits)
    assert rep.proved_optimal == (rep.gap_W == 0.0)
    if not rep.proved_optimal:
        assert rep.status != "optimal" and rep.gap_W > 0
        with pytest.raises(TimeLimitExceeded) as info:
            solve_exact(reqs, scen, dep, limits=limits, raise_on_limit=True)
        assert info.value.report.objective_W == rep.objective_W


@given(st.integers(0, 10_000), st.sampled_from(["same_type", "random_type"]))
def test_more_packages_never_cost_more(seed, policy):
    # optimum is non-increasing in k because deployments are nested
    reqs, scen, _, cat = small_instance(seed)
    n_packages = max(r.package for r in reqs)
    values = []
    for k in range(1, n_packages + 1):
        dep = make_deployment(policy, scen.vehicle_count, k, seed, n_packages)
        values.append(value(brute_force_oracle, reqs, scen, dep, cat))
        assert close(value(solve_exact, reqs, scen, dep, cat), values[-1])
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))


@given(st.integers(0, 10_000))
def test_adding_tiers_never_costs_more(seed):
    reqs = generate_requests(seed, WorkloadConfig(n_requests=6))
    chain = [
        Scenario(fog_server_count=0),
        Scenario(fog_server_count=1),
        Scenario(vehicle_count=1, fog_server_count=1),
        Scenario(vehicle_count=2, fog_server_count=1),
    ]
    # a vehicle's package draw does not depend on the fleet size, so fleets are nested
    values = [solve_exact(reqs, s, make_deployment("random_type", s.vehicle_count, 3, seed)).objective_W for s in chain]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:]))
