import itertools
import time
import numpy as np
import pytest

from laep.core import ExpertTokenCounts
from laep.rearrange import (
    GroupAssignment,
    LayerPlacement,
    balance_metrics,
    contiguous_baseline,
    place_layer,
    read_placement,
    rearrange,
    rearrange_periodic,
    remove_experts,
    write_placement,
)
from laep.utils.exceptions import ConfigError, ValidationError
from .fixtures.traces import SIX_EXPERT_LOADS, rows_trace, zipf_trace


def optimal_max_group_sum(loads, num_groups):
    """Exhaustive search over balanced partitions (equal group sizes)."""
    size = len(loads) // num_groups
    best = float("inf")

    def search(remaining, worst):
        nonlocal best
        if worst >= best:
            return
        if not remaining:
            best = worst
            return
        first, rest = remaining[0], remaining[1:]
        for others in itertools.combinations(rest, size - 1):
            group = (first,) + others
            left = tuple(i for i in rest if i not in others)
            search(left, max(worst, sum(loads[i] for i in group)))

    search(tuple(range(len(loads))), 0)
    return best


def random_instances(count=500, seed=77):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        num_groups = int(rng.choice([2, 3]))
        size = int(rng.integers(1, 12 // num_groups + 1))
        n = num_groups * size
        shares = 1.0 / np.arange(1, n + 1) ** rng.uniform(0.5, 2.0)
        loads = rng.multinomial(int(rng.integers(50, 2000)), shares / shares.sum())
        yield rng.permutation(loads).tolist(), num_groups


def test_rearrange_six_experts():
    assignment = rearrange(SIX_EXPERT_LOADS, 2)
    assert assignment.groups == ((0, 3, 4), (1, 2, 5))
    assert assignment.group_sums == (17, 15)
    assert assignment.reordered == [0, 3, 4, 1, 2, 5]


def test_rearrange_uniform_loads():
    assert rearrange([5, 5, 5, 5], 2).group_sums == (10, 10)


def test_rearrange_single_group_is_descending_order():
    assignment = rearrange([3, 9, 1, 9], 1)
    assert assignment.groups == ((1, 3, 0, 2),)
    assert assignment.group_sums == (22,)


def test_rearrange_pads_uneven_expert_counts():
    assignment = rearrange([7, 1, 4, 2, 6], 2, expert_ids=[10, 11, 12, 13, 14])
    assert assignment.group_size == 3
    assert assignment.num_padded == 1
    assert sorted(assignment.reordered) == [10, 11, 12, 13, 14]
    assert sum(assignment.group_sums) == 20


@pytest.mark.parametrize("loads, num_groups", [([], 2), ([1, 2], 0), ([1, -2], 1)])
def test_rearrange_errors(loads, num_groups):
    with pytest.raises(ValidationError):
        rearrange(loads, num_groups)


def test_contiguous_baseline():
    assignment = contiguous_baseline(SIX_EXPERT_LOADS, 2)
    assert assignment.groups == ((0, 1, 2), (3, 4, 5))
    assert assignment.group_sums == (24, 8)
    assert contiguous_baseline([5, 5, 5, 5], 2).group_sums == (10, 10)
    assert contiguous_baseline(SIX_EXPERT_LOADS, 6).group_sums == tuple(SIX_EXPERT_LOADS)


@pytest.mark.parametrize(
    "sums, variance, ratio",
    [((10, 10), 0.0, 1.0), ((17, 15), 1.0, 1.0625), ((32, 0), 256.0, 2.0)],
)
def test_balance_metrics(sums, variance, ratio):
    assignment = GroupAssignment(num_groups=2, group_size=1, groups=((0,), (1,)), group_sums=sums)
    metrics = balance_metrics(assignment)
    assert metrics.max_group_sum == max(sums)
    assert metrics.min_group_sum == min(sums)
    assert metrics.variance == pytest.approx(variance)
    assert metrics.imbalance_ratio == pytest.approx(ratio)


def test_group_assignment_rejects_overlap():
    with pytest.raises(ValidationError):
        GroupAssignment(num_groups=2, group_size=1, groups=((0,), (0,)), group_sums=(1, 1))


def test_rearrange_random_instances():
    start = time.perf_counter()
    for loads, num_groups in random_instances():
        greedy = rearrange(loads, num_groups)
        baseline = contiguous_baseline(loads, num_groups)

        assert sorted(greedy.reordered) == list(range(len(loads)))
        assert all(len(g) == greedy.group_size for g in greedy.groups)
        assert list(greedy.group_sums) == greedy.recompute_sums(dict(enumerate(loads)))
        assert rearrange(loads, num_groups) == greedy

        best = max(greedy.group_sums)
        assert best <= max(baseline.group_sums), loads
        assert best <= 4 / 3 * optimal_max_group_sum(loads, num_groups), loads
    assert time.perf_counter() - start < 10.0


def test_rearrange_beats_contiguous_on_zipf_loads():
    trace, _ = zipf_trace(num_iterations=50)
    for layer in range(trace.num_layers):
        loads = trace.counts[:, layer].sum(axis=0)
        greedy = balance_metrics(rearrange(loads, 8))
        baseline = balance_metrics(contiguous_baseline(loads, 8))
        assert greedy.max_group_sum <= baseline.max_group_sum
        assert greedy.variance <= baseline.variance


def test_place_layer_uses_survivor_ids():
    trace = rows_trace([SIX_EXPERT_LOADS])
    assignment = place_layer(trace, 0, [0, 1, 2, 3, 4, 5], 2, 0, 1)
    assert assignment.group_sums == (17, 15)

    # pruning expert 5 reroutes its slot onto the heaviest survivor
    pruned = place_layer(trace, 0, [0, 1, 2, 3, 4], 2, 0, 1)
    assert 5 not in pruned.reordered
    assert sum(pruned.group_sums) == 32


def test_rearrange_periodic_windows():
    rows = [[10, 0, 5, 5]] * 3 + [[0, 10, 5, 5]] * 3 + [[0, 10, 5, 5]]
    trace = rows_trace(rows)
    placements = rearrange_periodic(trace, 0, [0, 1, 2, 3], 2, period=3)
    assert [p.iter_begin for p in placements] == [0, 3, 6]
    assert 0 in placements[0].assignment.groups[0]
    assert 1 in placements[1].assignment.groups[0]


def test_remove_experts_keeps_devices():
    base = contiguous_baseline(SIX_EXPERT_LOADS, 2)
    trimmed = remove_experts(base, [2, 5], SIX_EXPERT_LOADS)
    assert trimmed.groups == ((0, 1), (3, 4))
    assert trimmed.group_sums == (18, 7)
    assert trimmed.num_padded == 2


def test_placement_file_round_trip(tmp_path):
    placements = [
        LayerPlacement(layer=0, assignment=rearrange([7, 1, 4, 2, 6], 2)),
        LayerPlacement(layer=1, assignment=rearrange(SIX_EXPERT_LOADS, 3), iter_begin=4),
    ]
    path = tmp_path / "placement.json"
    write_placement(placements, path)
    assert read_placement(path) == placements


def test_read_placement_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_placement(tmp_path / "missing.json")
