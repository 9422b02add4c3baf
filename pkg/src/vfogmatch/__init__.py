"""Minimum-power placement of requests across a cloud, a fixed fog and a vehicular fog."""

from .deployment import Deployment, make_deployment, random_type_deployment, same_type_deployment
from .model import Catalog, NodeRef, Request, Scenario, Tier, default_catalog, scenario_nodes, validate_scenario
from .optimizer import SolveLimits, SolveReport, brute_force_oracle, greedy_baseline, solve_exact
from .power import PowerBreakdown, request_power, total_power
from .workload import WorkloadConfig, generate_requests

__all__ = [
    "Catalog",
    "Deployment",
    "NodeRef",
    "PowerBreakdown",
    "Request",
    "Scenario",
    "SolveLimits",
    "SolveReport",
    "Tier",
    "WorkloadConfig",
    "brute_force_oracle",
    "default_catalog",
    "generate_requests",
    "greedy_baseline",
    "make_deployment",
    "random_type_deployment",
    "request_power",
    "same_type_deployment",
    "scenario_nodes",
    "solve_exact",
    "total_power",
    "validate_scenario",
]
