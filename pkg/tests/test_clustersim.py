import csv
import json
import time
import numpy as np
import pytest

from laep.clustersim import (
    BASE,
    PRUNED,
    PRUNED_REARRANGED,
    UNIFORM_CONTROL,
    compare_scenarios,
    count_params,
    mean_step_time,
    param_breakdown,
    read_report,
    step_time,
    write_report,
)
from laep.core import ModelStructure
from laep.pruning import FixedIteration, PruneConfig, prune
from laep.rearrange import GroupAssignment, LayerPlacement, contiguous_baseline, rearrange
from laep.utils.exceptions import ValidationError
from .fixtures.traces import constant_trace, zipf_trace

ONE_LAYER = ModelStructure(num_layers=1, experts_per_layer=64, top_k=2, hidden_size=1024, ffn_hidden_size=4096)


def test_expert_params_of_one_layer():
    assert param_breakdown(ONE_LAYER, [64]).experts == 536_870_912


def test_no_pruning_keeps_total():
    structure = ModelStructure(12, 64, 2, 1024, 4096, 4, 256)
    breakdown = param_breakdown(structure, [64] * 12, overhead=1000)
    assert breakdown.total == breakdown.attention + breakdown.router + breakdown.experts + 1000
    assert breakdown.attention == 12 * 4 * 1024 * 4 * 256
    assert breakdown.router == 12 * 1024 * 64


def test_halving_experts_halves_expert_params():
    structure = ModelStructure(12, 64, 2, 1024, 4096)
    full = param_breakdown(structure, [64] * 12)
    half = param_breakdown(structure, [32] * 12)
    assert half.experts * 2 == full.experts
    assert half.router == full.router


def test_count_params_is_strictly_monotone():
    structure = ModelStructure(3, 8, 2, 16, 32)
    base = count_params(structure, [4, 4, 4])
    for layer in range(3):
        more = [4, 4, 4]
        more[layer] = 5
        assert count_params(structure, more) > base


@pytest.mark.parametrize("experts", [[0], [65], [64, 64]])
def test_count_params_errors(experts):
    with pytest.raises(ValidationError):
        count_params(ONE_LAYER, experts)


def two_groups(sums):
    return GroupAssignment(num_groups=2, group_size=1, groups=((0,), (1,)), group_sums=sums)


@pytest.mark.parametrize("loads, expected", [([16, 16], 16.0), ([24, 8], 24.0)])
def test_step_time_is_max_group_load(loads, expected):
    assert step_time(loads, two_groups(tuple(loads))) == expected


def test_step_time_counts_resident_experts():
    placement = contiguous_baseline([5, 1, 1, 1], 2)
    assert step_time([5, 1, 1, 1], placement, expert_cost=2.0) == 10.0


def test_step_time_requires_loaded_experts_to_be_placed():
    placement = GroupAssignment(num_groups=1, group_size=2, groups=((0, 1),), group_sums=(3,))
    assert step_time([2, 1, 0], placement) == 3.0
    with pytest.raises(ValidationError):
        step_time([2, 1, 4], placement)


def test_step_time_is_permutation_invariant_within_groups():
    loads = [7, 3, 9, 1, 4, 4]
    a = GroupAssignment(2, 3, ((0, 1, 2), (3, 4, 5)), (19, 9))
    b = GroupAssignment(2, 3, ((5, 3, 4), (2, 0, 1)), (9, 19))
    assert step_time(loads, a) == step_time(loads, b)


def test_step_time_is_at_least_the_mean():
    rng = np.random.default_rng(3)
    for _ in range(50):
        loads = rng.integers(0, 100, size=12)
        placement = rearrange(loads, 4)
        assert step_time(loads, placement) >= loads.sum() / 4


def test_rearranged_placement_is_faster_on_zipf_trace():
    trace, _ = zipf_trace(num_layers=1, num_iterations=100)
    totals = trace.counts[:, 0].sum(axis=0)
    survivors = [list(range(trace.num_experts))]
    contiguous = mean_step_time(trace, survivors, [[contiguous_baseline(totals, 8)]], 0, 100)
    rearranged = mean_step_time(trace, survivors, [[rearrange(totals, 8)]], 0, 100)
    assert rearranged < contiguous


def test_mean_step_time_switches_periodic_placements():
    trace = constant_trace([6, 2], num_iterations=4)
    together = GroupAssignment(1, 2, ((0, 1),), (8,))
    apart = GroupAssignment(2, 1, ((0,), (1,)), (6, 2))
    placements = [[LayerPlacement(0, together, iter_begin=0), LayerPlacement(0, apart, iter_begin=2)]]
    assert mean_step_time(trace, [[0, 1]], placements, 0, 4) == pytest.approx(7.0)


def test_uniform_trace_scenarios_are_all_equal():
    trace = constant_trace([64] * 16, num_iterations=20, num_layers=2, top_k=2)
    structure = ModelStructure(2, 16, 2, 16, 32)
    reports = compare_scenarios(trace, structure, PruneConfig([0.4, 0.4], 0.1), num_groups=4)
    assert [r.scenario for r in reports] == [BASE, PRUNED, PRUNED_REARRANGED, UNIFORM_CONTROL]
    assert all(r.relative_throughput == pytest.approx(1.0) for r in reports)
    assert len({r.total_params for r in reports}) == 1


@pytest.fixture(scope="module")
def zipf_reports():
    trace, structure = zipf_trace(num_layers=4, num_experts=64, num_iterations=200)
    config = PruneConfig([0.4] * 4, 0.1, FixedIteration(0))
    start = time.perf_counter()
    reports = compare_scenarios(trace, structure, config, num_groups=8)
    elapsed = time.perf_counter() - start
    with_expert_cost = compare_scenarios(trace, structure, config, num_groups=8, expert_cost_ratio=1.0)
    return {
        "trace": trace,
        "elapsed": elapsed,
        "compute_only": {r.scenario: r for r in reports},
        "expert_cost": {r.scenario: r for r in with_expert_cost},
    }


def test_default_step_time_is_max_group_load(zipf_reports):
    counts = zipf_reports["trace"].counts
    # contiguous groups of eight experts, summed over layers, averaged over iterations
    expected = counts.reshape(200, 4, 8, 8).sum(axis=-1).max(axis=-1).sum(axis=-1).mean()
    assert zipf_reports["compute_only"][BASE].mean_step_time == pytest.approx(expected)


def test_rearrangement_improves_compute_only_throughput(zipf_reports):
    reports = zipf_reports["compute_only"]
    base, pruned, rearranged = reports[BASE], reports[PRUNED], reports[PRUNED_REARRANGED]
    assert base.relative_throughput == 1.0
    assert rearranged.relative_throughput >= pruned.relative_throughput
    assert rearranged.relative_throughput > base.relative_throughput
    assert zipf_reports["elapsed"] < 30.0


def test_pruning_alone_does_not_shrink_compute_only_load(zipf_reports):
    reports = zipf_reports["compute_only"]
    # rerouting keeps the total load and survivors in the busiest groups absorb part of it
    assert reports[PRUNED].relative_throughput < 1.0


def test_expert_cost_orders_all_scenarios(zipf_reports):
    reports = zipf_reports["expert_cost"]
    base, pruned, rearranged = reports[BASE], reports[PRUNED], reports[PRUNED_REARRANGED]
    assert rearranged.relative_throughput >= pruned.relative_throughput >= base.relative_throughput
    assert rearranged.relative_throughput > base.relative_throughput
    assert rearranged.mean_step_time <= pruned.mean_step_time
    assert base.mean_step_time > zipf_reports["compute_only"][BASE].mean_step_time


def test_pruned_scenarios_report_fewer_params(zipf_reports):
    reports = zipf_reports["compute_only"]
    assert reports[PRUNED].total_params < reports[BASE].total_params
    assert reports[PRUNED_REARRANGED].total_params == reports[PRUNED].total_params
    assert reports[UNIFORM_CONTROL].experts_per_layer == [max(reports[PRUNED].experts_per_layer)] * 4


def test_extra_traces_are_reported_against_base():
    trace, structure = zipf_trace(num_layers=2, num_experts=16, num_iterations=40, seed=1)
    uniform = constant_trace([256] * 16, num_iterations=40, num_layers=2, top_k=2)
    reports = compare_scenarios(
        trace,
        structure,
        PruneConfig([0.4, 0.4], 0.1),
        num_groups=4,
        expert_cost_ratio=0.0,
        extra_traces={"aux_loss": uniform},
    )
    extra = reports[-1]
    assert extra.scenario == "aux_loss"
    assert extra.relative_throughput > 1.0

    with pytest.raises(ValidationError):
        compare_scenarios(trace, structure, PruneConfig([0.4, 0.4], 0.1), 4, extra_traces={BASE: uniform})


def test_report_files(tmp_path):
    trace, structure = zipf_trace(num_layers=2, num_experts=16, num_iterations=40, seed=1)
    decision = prune(trace, PruneConfig([0.4, 0.4], 0.1))
    reports = compare_scenarios(trace, structure, PruneConfig([0.4, 0.4], 0.1), 4, decision=decision)
    csv_path = write_report(reports, str(tmp_path / "report.json"))

    assert read_report(str(tmp_path / "report.json")) == reports
    with open(csv_path) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["scenario", "total_params", "mean_step_time", "relative_throughput"]
    assert [r[0] for r in rows[1:]] == [r.scenario for r in reports]
    assert json.loads((tmp_path / "report.json").read_text())[0]["scenario"] == BASE
