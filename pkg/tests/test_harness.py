import csv
import json
from dataclasses import replace

import pytest

from vfogmatch.cli import main
from vfogmatch.config import ConfigError, config_from_dict, load_config
from vfogmatch.harness import SWEEP_LIMITS, SweepConfig, emit_results, run_sweep
from vfogmatch.model import ModelError
from vfogmatch.optimizer import SolveLimits
from vfogmatch.workload import WorkloadConfig

SMALL = SweepConfig(
    k_values=(1, 3, 5),
    seeds=(0, 1),
    workload=WorkloadConfig(n_requests=15, n_packages=5),
    limits=SolveLimits(node_limit=10, search_rounds=3),
)


@pytest.fixture(scope="module")
def small_result():
    return run_sweep(SMALL)


def test_every_cell_solved_and_conserves_requests(small_result):
    cells = small_result.cells
    # Cloud and CloudFog solved once per seed and shared across policies and k
    assert len(cells) == len(SMALL.seeds) * len(SMALL.scenarios) * len(SMALL.policies) * len(SMALL.k_values)
    for c in cells:
        assert c.report is not None
        assert sum(c.report.tier_counts.values()) == 15


def test_savings_match_hand_computation(small_result):
    power = {c.key: c.report.objective_W for c in small_result.cells}
    rows = {(r["scenario"], r["policy"], r["k"]): r for r in small_result.savings()}
    for key in [("CloudFogVF2", "random_type", 3), ("CloudFog", "same_type", 1)]:
        name, policy, k = key
        hand = [
            (power[(s, "Cloud", policy, k)] - power[(s, name, policy, k)]) / power[(s, "Cloud", policy, k)] for s in SMALL.seeds
        ]
        assert rows[key]["vs_Cloud_pct"] == pytest.approx(100 * sum(hand) / len(hand), rel=1e-12)
    summary = small_result.savings_summary()
    assert {e["scenario"] for e in summary["k_averaged"]} == set(SMALL.scenarios)
    assert set(summary["max_random_minus_same"]) == {"CloudFogVF1", "CloudFogVF2", "CloudFogVF3"}


def test_shape_picks_smallest_k_near_minimum(small_result):
    means = small_result.mean_power()
    for row in small_result.shape():
        curve = {k: means[(row["scenario"], row["policy"], k)] for k in SMALL.k_values}
        low = min(curve.values())
        assert curve[row["k_star"]] <= low * (1 + SMALL.plateau_tolerance)
        assert all(curve[k] > low * (1 + SMALL.plateau_tolerance) for k in SMALL.k_values if k < row["k_star"])


def test_emitted_tables(small_result, tmp_path):
    paths = emit_results(small_result, tmp_path)
    names = {p.name for p in paths}
    assert names == {
        "results.json",
        "power_vs_k_same_type.csv",
        "power_vs_k_random_type.csv",
        "allocation_same_type.csv",
        "allocation_random_type.csv",
        "savings_by_k.csv",
        "savings.csv",
        "random_vs_same.csv",
    }
    with open(tmp_path / "power_vs_k_same_type.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "Cloud", "CloudFog", "CloudFogVF1", "CloudFogVF2", "CloudFogVF3"]
    assert [r[0] for r in rows[1:]] == ["1", "3", "5"]
    with open(tmp_path / "allocation_random_type.csv") as fh:
        for row in list(csv.DictReader(fh)):
            assert float(row["VF"]) + float(row["FixedFog"]) + float(row["Cloud"]) == pytest.approx(15)
    doc = json.loads((tmp_path / "results.json").read_text())
    assert doc["schema_version"] == 1 and len(doc["cells"]) == len(small_result.cells)


def test_parallel_run_is_byte_identical(small_result, tmp_path):
    emit_results(small_result, tmp_path / "serial")
    emit_results(run_sweep(replace(SMALL, workers=2)), tmp_path / "parallel")
    for p in (tmp_path / "serial").iterdir():
        assert p.read_bytes() == (tmp_path / "parallel" / p.name).read_bytes(), p.name


def test_config_loading(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps(
            {
                "seed_count": 3,
                "k_values": [2, 4],
                "workload": {"n_requests": 30},
                "catalog": {"devices": {"rsu": {"enforce_capacity": True}}},
                "limits": {"node_limit": 5},
                "scenario": {"core_hops": 3},
            }
        )
    )
    cfg = load_config(path)
    assert cfg.seeds == (0, 1, 2) and cfg.k_values == (2, 4)
    assert cfg.workload.n_requests == 30 and cfg.workload.n_packages == 10
    assert cfg.limits == SolveLimits(**{**SWEEP_LIMITS.__dict__, "node_limit": 5})
    assert cfg.catalog().device("rsu").enforce_capacity
    assert cfg.scenario("CloudFogVF1").core_hops == 3


@pytest.mark.parametrize(
    "bad",
    [
        {"colour": "red"},
        {"schema_version": 2},
        {"seeds": [0], "seed_count": 2},
        {"scenario": {"vehicles": 3}},
        {"k_values": [0]},
        {"scenarios": ["Edge"]},
        {"catalog": {"devices": {"warp_drive": {"capacity": 1}}}},
        {"limits": {"patience": 3}},
    ],
)
def test_bad_configs_are_rejected(bad):
    with pytest.raises(ModelError):
        config_from_dict(bad)


def test_bad_json(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("{")
    with pytest.raises(ConfigError):
        load_config(path)


def test_cli_solve_and_check(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["solve", "--scenario", "CloudFogVF1", "--k", "4", "--node-limit", "20", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["instance"]["k"] == 4
    assert main(["solve", "--check", str(out)]) == 0
    doc["report"]["assignment"][0]["tier"] = "VF"
    doc["report"]["assignment"][0]["node"] = 99
    out.write_text(json.dumps(doc))
    assert main(["solve", "--check", str(out)]) == 1
    assert "VIOLATION" in capsys.readouterr().err


def test_cli_sweep_and_check(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"workload": {"n_requests": 8}, "limits": {"node_limit": 5, "search_rounds": 2}}))
    out = tmp_path / "res"
    argv = ["sweep", "--config", str(cfg), "--seeds", "0-1", "--k", "1,10", "--out", str(out)]
    assert main(argv) == 0
    assert main(["sweep", "--check", str(out / "results.json")]) == 0
    doc = json.loads((out / "results.json").read_text())
    doc["cells"][-1]["total_W"] *= 1.01
    (out / "results.json").write_text(json.dumps(doc))
    assert main(["sweep", "--check", str(out / "results.json")]) == 1
    assert "PowerMismatch" in capsys.readouterr().err


def test_cli_misc(capsys):
    assert main(["catalog"]) == 0
    assert "vehicle_wifi" in capsys.readouterr().out
    assert main(["catalog", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)
    assert main(["oracle-check", "--count", "20"]) == 0
    assert main(["sweep", "--config", "/nonexistent.json"]) == 2
    with pytest.raises(SystemExit):
        main(["sweep", "--k", "x"])
