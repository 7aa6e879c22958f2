import math
import time
import numpy as np
import pytest
from hypothesis import given, strategies as st

from laep.core import ExpertTokenCounts
from laep.pruning import (
    STABILITY_RULES,
    FixedIteration,
    PruneConfig,
    RankCorrelation,
    accumulate_markers,
    alpha_schedule_constant,
    alpha_schedule_hybrid,
    detect_stability,
    parse_stability,
    prune,
    prune_layer,
    rank_by_markers,
    read_decision,
    select_pruned,
    write_decision,
)
from laep.utils.exceptions import ConfigError, DimensionMismatchError, StabilityNotFoundError, ValidationError
from .fixtures.traces import (
    ALPHAS,
    BETAS,
    FOUR_EXPERT_LOADS,
    PRUNE_CASES,
    constant_trace,
    rows_trace,
    two_phase_trace,
)


def brute_force_prune(loads, alpha, beta):
    """Evaluates both inequalities over every ascending-sorted prefix."""
    total = sum(loads)
    order = sorted(range(len(loads)), key=lambda i: (loads[i], i))
    pruned = set()
    for position, expert in enumerate(order):
        prefix = sum(loads[i] for i in order[: position + 1])
        below_alpha = alpha == math.inf or loads[expert] < alpha * total / len(loads)
        if prefix < beta * total and below_alpha:
            pruned.add(expert)
    if len(pruned) == len(loads):
        pruned.discard(order[-1])
    return pruned


def random_instances(count=1000, seed=2024):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, 17))
        scale = int(rng.choice([5, 100, 10_000]))
        loads = rng.integers(0, scale, size=n).tolist()
        yield loads, float(rng.choice(ALPHAS)), float(rng.choice(BETAS))


@pytest.mark.parametrize("loads, alpha, beta, expected", PRUNE_CASES)
def test_prune_layer_examples(loads, alpha, beta, expected):
    assert prune_layer(loads, alpha, beta, total_slots=sum(loads)) == expected


def test_prune_layer_matches_brute_force():
    instances = list(random_instances())
    start = time.perf_counter()
    for loads, alpha, beta in instances:
        assert prune_layer(loads, alpha, beta) == brute_force_prune(loads, alpha, beta), (loads, alpha, beta)
    assert time.perf_counter() - start < 1.0


def test_prune_layer_is_monotone_in_alpha_and_beta():
    for loads, _, beta in random_instances():
        pruned = [prune_layer(loads, alpha, beta) for alpha in ALPHAS]
        assert all(a <= b for a, b in zip(pruned, pruned[1:])), loads
    for loads, alpha, _ in random_instances():
        pruned = [prune_layer(loads, alpha, beta) for beta in BETAS]
        assert all(a <= b for a, b in zip(pruned, pruned[1:])), loads


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=16, unique=True), st.randoms(use_true_random=False))
def test_pruned_load_multiset_is_permutation_invariant(loads, random):
    shuffled = loads[:]
    random.shuffle(shuffled)
    original = sorted(loads[i] for i in prune_layer(loads, 0.6, 0.2))
    permuted = sorted(shuffled[i] for i in prune_layer(shuffled, 0.6, 0.2))
    assert original == permuted


@given(st.lists(st.integers(0, 1000), min_size=1, max_size=16), st.sampled_from(ALPHAS), st.sampled_from(BETAS))
def test_pruned_set_respects_both_budgets(loads, alpha, beta):
    total = sum(loads)
    pruned = prune_layer(loads, alpha, beta)
    if not pruned:
        return
    assert all(alpha == math.inf or loads[i] < alpha * total / len(loads) for i in pruned)
    last = max(loads[i] for i in pruned)
    assert sum(loads[i] for i in pruned) < beta * total + last


def test_prune_layer_never_empties_a_layer():
    assert prune_layer([0, 0, 0], float("inf"), 1.0) == set()
    assert prune_layer([1, 1, 1, 100], float("inf"), 1.0) == {0, 1, 2}
    assert prune_layer([1, 1, 1, 100], float("inf"), 1.0, min_survivors=2) == {0, 1}


@pytest.mark.parametrize(
    "loads, kwargs",
    [([3, -1], {}), ([3, 1], {"total_slots": 5}), ([], {})],
)
def test_prune_layer_errors(loads, kwargs):
    with pytest.raises(ValidationError):
        prune_layer(loads, 0.4, 0.1, **kwargs)


def test_accumulate_markers_constant_trace():
    trace = constant_trace(FOUR_EXPERT_LOADS, num_iterations=3)
    markers, exp_dis = accumulate_markers(trace, PruneConfig([0.4], 0.1), 0, 3)
    assert markers.tolist() == [[0, 0, 3, 3]]
    assert exp_dis.tolist() == [2]


def test_accumulate_markers_single_iteration_is_the_flag_vector():
    trace = constant_trace(FOUR_EXPERT_LOADS, num_iterations=3)
    markers, _ = accumulate_markers(trace, PruneConfig([0.4], 0.1), 1, 2)
    assert markers.tolist() == [[0, 0, 1, 1]]


def test_accumulate_markers_fluctuating_loads():
    # expert 2 is flagged in the first two rows only
    trace = rows_trace([[120, 61, 14, 5], [120, 61, 14, 5], [110, 61, 24, 5]])
    markers, exp_dis = accumulate_markers(trace, PruneConfig([0.4], 0.1), 0, 3)
    assert markers.tolist() == [[0, 0, 2, 3]]
    assert exp_dis.tolist() == [1]
    assert rank_by_markers(markers[0])[:2] == [3, 2]


def test_accumulate_markers_rejects_empty_range():
    with pytest.raises(ValidationError):
        accumulate_markers(constant_trace(FOUR_EXPERT_LOADS), PruneConfig([0.4], 0.1), 2, 2)


def test_accumulate_markers_rejects_schedule_length():
    with pytest.raises(DimensionMismatchError):
        accumulate_markers(constant_trace(FOUR_EXPERT_LOADS), PruneConfig([0.4, 0.4], 0.1), 0, 1)


@pytest.mark.parametrize(
    "markers, count, pruned, survivors",
    [
        ([0, 0, 3, 3], 2, (2, 3), (0, 1)),
        ([0, 0, 0, 0], 0, (), (0, 1, 2, 3)),
        ([1, 2, 2, 0], 2, (1, 2), (0, 3)),
        ([2, 2, 2, 2], 1, (0,), (1, 2, 3)),
    ],
)
def test_select_pruned(markers, count, pruned, survivors):
    decision = select_pruned([markers], [count])
    layer = decision.layers[0]
    assert layer.pruned == pruned
    assert layer.survivors == survivors
    assert layer.markers == tuple(markers)


def test_select_pruned_rejects_pruning_everything():
    with pytest.raises(ValidationError):
        select_pruned([[1, 1]], [2])


def test_select_pruned_keeps_min_survivors():
    decision = select_pruned([[5, 5, 5, 0]], [3], min_survivors=2)
    assert decision.experts_per_layer() == [2]


def test_alpha_schedule_hybrid_twelve_layers():
    assert alpha_schedule_hybrid(12, 0.2, 0.4) == [0.2, 0.2] + [0.4] * 8 + [0.2, 0.2]


def test_alpha_schedule_hybrid_large_model():
    schedule = alpha_schedule_hybrid(103, 0.2, 0.4)
    edge = [i for i, a in enumerate(schedule) if a == 0.2]
    assert edge == list(range(18)) + list(range(85, 103))


@pytest.mark.parametrize("num_layers", [1, 5, 7])
def test_alpha_schedule_hybrid_degenerate(num_layers):
    assert alpha_schedule_hybrid(num_layers, 0.3, 0.3) == alpha_schedule_constant(num_layers, 0.3)
    assert alpha_schedule_hybrid(1, 0.2, 0.4) == [0.2]


def test_detect_stability_fixed():
    assert detect_stability(constant_trace(FOUR_EXPERT_LOADS), FixedIteration(500)) == 500


def test_detect_stability_constant_trace():
    trace = constant_trace(FOUR_EXPERT_LOADS, num_iterations=30)
    assert detect_stability(trace, RankCorrelation(0.95, 5)) == 10


def test_detect_stability_two_phase():
    trace, _ = two_phase_trace()
    stable = detect_stability(trace, RankCorrelation(0.95, 50))
    assert 200 < stable <= 400


def test_detect_stability_not_found():
    # consecutive rows never agree on the ranking
    rows = [[1, 5, 10], [10, 5, 1], [5, 10, 1]] * 4
    with pytest.raises(StabilityNotFoundError):
        detect_stability(rows_trace(rows), RankCorrelation(0.95, 1))
    with pytest.raises(StabilityNotFoundError):
        detect_stability(rows_trace(rows[:1]), RankCorrelation(0.95, 1))


@pytest.mark.parametrize("text, expected", [("fixed:7", FixedIteration), ("rank:0.9:25", RankCorrelation)])
def test_parse_stability(text, expected):
    rule = parse_stability(text)
    assert isinstance(rule, expected)
    assert str(rule) == text
    assert rule.name in STABILITY_RULES


@pytest.mark.parametrize("text", ["linear:1", "fixed", "rank:0.9", "rank:x:3"])
def test_parse_stability_errors(text):
    with pytest.raises(ConfigError):
        parse_stability(text)


def test_prune_config_validation():
    with pytest.raises(ValidationError):
        PruneConfig([0.4], 1.5)
    with pytest.raises(ValidationError):
        PruneConfig([-0.1], 0.1)


def test_prune_engine_uses_stable_window():
    rows = [[50, 50, 50, 50]] * 4 + [[120, 61, 14, 5]] * 6
    decision = prune(rows_trace(rows), PruneConfig([0.4], 0.1, FixedIteration(4), marker_window=3))
    assert decision.window == (4, 7)
    assert decision.pruned(0) == [2, 3]
    assert decision.survivors(0) == [0, 1]


def test_prune_engine_keeps_top_k_experts():
    counts = np.tile(np.array([100, 1, 1, 1, 1, 0], dtype=np.int64), (4, 1, 1))
    trace = ExpertTokenCounts(counts=counts, tokens_per_iter=52, top_k=2)
    decision = prune(trace, PruneConfig([float("inf")], 1.0))
    assert len(decision.survivors(0)) >= 2


def test_prune_engine_fixed_iteration_beyond_trace():
    with pytest.raises(StabilityNotFoundError):
        prune(constant_trace(FOUR_EXPERT_LOADS), PruneConfig([0.4], 0.1, FixedIteration(3)))


def test_decision_file_round_trip(tmp_path):
    trace = constant_trace(FOUR_EXPERT_LOADS, num_layers=2)
    decision = prune(trace, PruneConfig([0.4, float("inf")], 0.1))
    path = tmp_path / "decision.json"
    write_decision(decision, path)
    assert read_decision(path) == decision
