import copy
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vfogmatch.deployment import Deployment, same_type_deployment
from vfogmatch.harness import SweepConfig, run_sweep
from vfogmatch.model import NodeRef, Request, Scenario, Tier, default_catalog
from vfogmatch.optimizer import SolveLimits
from vfogmatch.power import request_power, total_power
from vfogmatch.validator import (
    COLLAPSE,
    CONSERVATION,
    CPU_OVER_CAPACITY,
    DOMINANCE,
    MONOTONICITY,
    NET_OVER_CAPACITY,
    PACKAGE_MISMATCH,
    UNASSIGNED,
    UNKNOWN_NODE,
    UNKNOWN_REQUEST,
    check_assignment,
    check_sweep,
    recompute_power,
)
from vfogmatch.workload import WorkloadConfig

VF1 = Scenario.named("CloudFogVF1")
V0, V1 = NodeRef(Tier.VF, 0), NodeRef(Tier.VF, 1)
FOG, CLOUD = NodeRef(Tier.FIXED_FOG, 0), NodeRef(Tier.CLOUD, 0)


def kinds(violations):
    return sorted(v.kind for v in violations)


def test_valid_assignment_has_no_violations():
    reqs = [Request(0, 100, 10, 10, 1), Request(1, 100, 10, 10, 2), Request(2, 100, 10, 10, 3)]
    dep = same_type_deployment(5, 2)
    assert check_assignment({0: V0, 1: V0, 2: FOG}, reqs, VF1, dep) == []


def test_package_mismatch():
    reqs = [Request(0, 100, 10, 10, 3)]
    out = check_assignment({0: V0}, reqs, VF1, same_type_deployment(5, 2))
    assert kinds(out) == [PACKAGE_MISMATCH]
    assert "request 0" in str(out[0])


def test_cpu_over_capacity():
    reqs = [Request(0, 150, 10, 10, 1), Request(1, 150, 10, 10, 1)]
    assert kinds(check_assignment({0: V1, 1: V1}, reqs, VF1, same_type_deployment(5, 1))) == [CPU_OVER_CAPACITY]


def test_wifi_over_capacity():
    reqs = [Request(0, 100, 30, 10, 1), Request(1, 100, 30, 10, 1)]
    assert kinds(check_assignment({0: V0, 1: V0}, reqs, VF1, same_type_deployment(5, 1))) == [NET_OVER_CAPACITY]


def test_enforced_shared_device():
    reqs = [Request(0, 100, 20, 10, 1), Request(1, 100, 20, 10, 1)]
    scen = Scenario.named("CloudFogVF1", enforce=frozenset({"vehicle_wifi", "rsu"}))
    # 40 Mbps through a 27 Mbps RSU once the RSU is a hard limit
    out = check_assignment({0: FOG, 1: CLOUD}, reqs, scen, same_type_deployment(5, 1))
    assert kinds(out) == [NET_OVER_CAPACITY] and out[0].node == "rsu"


def test_unknown_and_unassigned():
    reqs = [Request(0, 100, 10, 10, 1), Request(1, 100, 10, 10, 1)]
    dep = same_type_deployment(5, 1)
    out = check_assignment({0: NodeRef(Tier.VF, 7), 5: CLOUD}, reqs, VF1, dep)
    assert kinds(out) == [UNASSIGNED, UNKNOWN_NODE, UNKNOWN_REQUEST]
    cloud_only = Scenario.named("Cloud")
    assert kinds(check_assignment({0: FOG, 1: CLOUD}, reqs, cloud_only, Deployment((), 1))) == [UNKNOWN_NODE]


@given(
    st.lists(
        st.tuples(st.floats(1, 300), st.floats(1, 50), st.floats(1, 500), st.sampled_from([Tier.FIXED_FOG, Tier.CLOUD])),
        max_size=8,
    )
)
def test_recompute_agrees_with_power_model(rows):
    reqs = [Request(i, c, n, s, 1) for i, (c, n, s, _) in enumerate(rows)]
    # fog nodes are roomy enough for 8 requests of up to 300 MHz
    assignment = {i: NodeRef(t, 0) for i, (_, _, _, t) in enumerate(rows)}
    dep = same_type_deployment(5, 1)
    a = recompute_power(assignment, reqs, VF1).total_W
    b = total_power(assignment, reqs, VF1, dep).total_W
    paths = VF1.build_paths(default_catalog())
    c = math.fsum(request_power(r, assignment[r.id].tier, paths, default_catalog()) for r in reqs)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)
    assert a == pytest.approx(c, rel=1e-12, abs=1e-12)


@pytest.fixture(scope="module")
def sweep_doc():
    cfg = SweepConfig(
        scenarios=("Cloud", "CloudFog", "CloudFogVF1"),
        k_values=(1, 2),
        seeds=(0, 1),
        workload=WorkloadConfig(n_requests=12, n_packages=2),
        limits=SolveLimits(node_limit=20, search_rounds=4),
    )
    return run_sweep(cfg).to_dict()


def test_clean_sweep_passes(sweep_doc):
    assert check_sweep(sweep_doc) == []


def _mean(doc, scenario, policy, k):
    return next(m for m in doc["means"] if (m["scenario"], m["policy"], m["k"]) == (scenario, policy, k))


def test_doctored_sweeps_are_caught(sweep_doc):
    doc = copy.deepcopy(sweep_doc)
    doc["cells"][0]["tier_counts"]["Cloud"] += 1
    assert kinds(check_sweep(doc)) == [CONSERVATION]

    doc = copy.deepcopy(sweep_doc)
    _mean(doc, "CloudFogVF1", "same_type", 2)["total_W"] = _mean(doc, "CloudFogVF1", "same_type", 1)["total_W"] + 1
    assert MONOTONICITY in kinds(check_sweep(doc))

    doc = copy.deepcopy(sweep_doc)
    _mean(doc, "CloudFog", "random_type", 1)["total_W"] = _mean(doc, "Cloud", "random_type", 1)["total_W"] + 1
    assert kinds(check_sweep(doc)) == [DOMINANCE]

    doc = copy.deepcopy(sweep_doc)
    cell = next(c for c in doc["cells"] if (c["scenario"], c["policy"], c["k"]) == ("CloudFogVF1", "random_type", 2))
    cell["total_W"] += 1e-9
    assert kinds(check_sweep(doc)) == [COLLAPSE]
