import numpy as np
from dataclasses import dataclass
from loguru import logger
from typing import Dict, List, Sequence, Union

from laep.clustersim.params import count_params
from laep.core import ExpertTokenCounts, ModelStructure, reroute_rows, validate_trace
from laep.pruning import PruneConfig, PruneDecision, marker_range, prune
from laep.rearrange import (
    GroupAssignment,
    LayerPlacement,
    contiguous_baseline,
    place_layer,
    remove_experts,
)
from laep.utils.exceptions import DimensionMismatchError, ValidationError

BASE = "base"
PRUNED = "pruned"
PRUNED_REARRANGED = "pruned_rearranged"
UNIFORM_CONTROL = "uniform_control"
SCENARIOS = (BASE, PRUNED, PRUNED_REARRANGED, UNIFORM_CONTROL)


@dataclass
class ScenarioReport:
    scenario: str
    total_params: int
    experts_per_layer: List[int]
    mean_step_time: float
    relative_throughput: float = 1.0

    def __state_dict__(self):
        return {
            "scenario": self.scenario,
            "total_params": self.total_params,
            "experts_per_layer": list(self.experts_per_layer),
            "mean_step_time": self.mean_step_time,
            "relative_throughput": self.relative_throughput,
        }


def _membership(placement: GroupAssignment, num_experts: int) -> np.ndarray:
    membership = np.zeros((num_experts, placement.num_groups), dtype=np.float64)
    for g, members in enumerate(placement.groups):
        for expert in members:
            if not 0 <= expert < num_experts:
                raise ValidationError(f"placement holds expert {expert} outside 0..{num_experts - 1}")
            membership[expert, g] = 1.0
    return membership


def layer_step_times(rows: np.ndarray, placement: GroupAssignment, expert_cost: float = 0.0) -> np.ndarray:
    """Per-iteration proxy time of one layer: the largest group load.

    A group's load is its members' token slots plus ``expert_cost`` per member.

    Args:
        rows (np.ndarray): ``[iterations, experts]`` loads indexed by expert id.
        placement (GroupAssignment): Device groups for this layer.
        expert_cost (float): Token-equivalent cost of one resident expert.
    """
    rows = np.atleast_2d(np.asarray(rows))
    unplaced = sorted(set(range(rows.shape[1])) - placement.experts)
    if unplaced and rows[:, unplaced].any():
        missing = [e for e in unplaced if rows[:, e].any()]
        raise ValidationError(f"experts {missing} carry load but are missing from the placement")

    sizes = np.array([len(g) for g in placement.groups], dtype=np.float64)
    sums = rows.astype(np.float64) @ _membership(placement, rows.shape[1]) + expert_cost * sizes
    return sums.max(axis=1)


def step_time(loads: Sequence[int], placement: GroupAssignment, expert_cost: float = 0.0) -> float:
    return float(layer_step_times(np.asarray(loads)[None, :], placement, expert_cost)[0])


def _schedule(placements: Sequence[Union[GroupAssignment, LayerPlacement]]):
    schedule = []
    for p in placements:
        if isinstance(p, LayerPlacement):
            schedule.append((p.iter_begin or 0, p.assignment))
        else:
            schedule.append((0, p))
    if not schedule:
        raise ValidationError("a layer has no placement")
    return sorted(schedule, key=lambda s: s[0])


def mean_step_time(
    trace: ExpertTokenCounts,
    survivors: Sequence[Sequence[int]],
    placements: Sequence[Sequence[Union[GroupAssignment, LayerPlacement]]],
    iter_begin: int,
    iter_end: int,
    expert_cost: float = 0.0,
) -> float:
    """Mean over ``[iter_begin, iter_end)`` of the model step time.

    The model step time sums the per-layer proxies. Slots of experts missing from
    ``survivors[l]`` are rerouted onto the survivors first. A layer may carry several
    placements tagged with ``iter_begin``; each iteration uses the latest one that
    has started (or the earliest if none has).
    """
    if len(survivors) != trace.num_layers or len(placements) != trace.num_layers:
        raise DimensionMismatchError(
            f"need survivors and placements for {trace.num_layers} layers, "
            f"got {len(survivors)} and {len(placements)}"
        )
    if not 0 <= iter_begin < iter_end <= trace.num_iterations:
        raise ValidationError(f"range [{iter_begin}, {iter_end}) is empty or outside the trace")

    iterations = np.arange(iter_begin, iter_end)
    total = np.zeros(len(iterations), dtype=np.float64)
    for layer in range(trace.num_layers):
        rows = trace.counts[iter_begin:iter_end, layer]
        if len(survivors[layer]) < trace.num_experts:
            rows = reroute_rows(rows, survivors[layer])

        schedule = _schedule(placements[layer])
        starts = np.array([s for s, _ in schedule])
        active = np.clip(np.searchsorted(starts, iterations, side="right") - 1, 0, None)
        for index, (_, assignment) in enumerate(schedule):
            mask = active == index
            if mask.any():
                total[mask] += layer_step_times(rows[mask], assignment, expert_cost)

    return float(total.mean())


def _window_loads(trace: ExpertTokenCounts, layer: int, begin: int, end: int, survivors=None) -> np.ndarray:
    rows = trace.counts[begin:end, layer]
    if survivors is not None and len(survivors) < trace.num_experts:
        rows = reroute_rows(rows, survivors)
    return rows.sum(axis=0)


def _top_experts(loads: np.ndarray, count: int) -> List[int]:
    order = sorted(range(len(loads)), key=lambda i: (-int(loads[i]), i))
    return sorted(order[:count])


def compare_scenarios(
    trace: ExpertTokenCounts,
    structure: ModelStructure,
    prune_config: PruneConfig,
    num_groups: int,
    decision: PruneDecision = None,
    placements: Sequence[Sequence[LayerPlacement]] = None,
    expert_cost_ratio: float = 0.0,
    overhead: int = 0,
    extra_traces: Dict[str, ExpertTokenCounts] = None,
) -> List[ScenarioReport]:
    """Compares base, pruned, pruned + rearranged and a uniform-count control.

    Step times are averaged over the evaluation window that starts at the stable
    iteration. The default proxy is compute-only: step time is the largest group
    token load. With ``expert_cost_ratio > 0`` each resident expert also costs
    ``expert_cost_ratio * S * top_k / N`` token slots, which credits pruning for the
    expert work it removes. Rerouting keeps the total token load, so under the
    compute-only proxy the pruned scenario can be slower than the base one.

    Args:
        trace (ExpertTokenCounts): Trace replayed for every scenario.
        structure (ModelStructure): Structure used for parameter accounting.
        prune_config (PruneConfig): Pruning configuration, used when ``decision`` is absent.
        num_groups (int): Device groups per layer.
        decision (PruneDecision, optional): Precomputed decision.
        placements (optional): Per-layer placements for the rearranged scenario.
        expert_cost_ratio (float): Opt-in resident expert cost relative to the mean expert load.
        overhead (int): Fixed parameter overhead.
        extra_traces (Dict[str, ExpertTokenCounts], optional): Further traces (for example
            from auxiliary-loss training) reported with all experts and base placement.
    Returns:
        List[ScenarioReport]: base, pruned, pruned_rearranged, uniform_control, then extras.
    """
    validate_trace(trace, structure)
    if expert_cost_ratio < 0:
        raise ValidationError(f"expert_cost_ratio must be >= 0, got {expert_cost_ratio}")
    if decision is None:
        decision = prune(trace, prune_config)
    if decision.num_layers != trace.num_layers or any(
        d.num_experts != trace.num_experts for d in decision.layers
    ):
        raise DimensionMismatchError("decision does not match the trace's layers and experts")

    begin = decision.stable_iteration
    if begin is None:
        begin, _ = marker_range(trace, prune_config)
    end = trace.num_iterations
    expert_cost = expert_cost_ratio * trace.total_slots / trace.num_experts
    all_experts = list(range(trace.num_experts))
    layers = range(trace.num_layers)
    logger.info(f"Evaluating scenarios over iterations [{begin}, {end}) with expert cost {expert_cost:.2f}")

    base_placement = [
        contiguous_baseline(_window_loads(trace, l, begin, end), num_groups) for l in layers
    ]
    survivors = [decision.survivors(l) for l in layers]

    scenarios = {}
    scenarios[BASE] = ([all_experts] * len(layers), [[p] for p in base_placement])
    scenarios[PRUNED] = (
        survivors,
        [
            [remove_experts(base_placement[l], decision.pruned(l), _window_loads(trace, l, begin, end, survivors[l]))]
            for l in layers
        ],
    )
    if placements is None:
        placements = [[place_layer(trace, l, survivors[l], num_groups, begin, end)] for l in layers]
    elif len(placements) != trace.num_layers:
        raise DimensionMismatchError(f"placements cover {len(placements)} layers, trace has {trace.num_layers}")
    scenarios[PRUNED_REARRANGED] = (survivors, placements)

    width = max(decision.experts_per_layer())
    control = [_top_experts(_window_loads(trace, l, begin, end), width) for l in layers]
    scenarios[UNIFORM_CONTROL] = (
        control,
        [
            [contiguous_baseline(_window_loads(trace, l, begin, end, control[l])[control[l]], num_groups, control[l])]
            for l in layers
        ],
    )

    reports = []
    for name, (kept, layer_placements) in scenarios.items():
        experts_per_layer = [len(k) for k in kept]
        reports.append(
            ScenarioReport(
                scenario=name,
                total_params=count_params(structure, experts_per_layer, overhead),
                experts_per_layer=experts_per_layer,
                mean_step_time=mean_step_time(trace, kept, layer_placements, begin, end, expert_cost),
            )
        )

    for name, other in (extra_traces or {}).items():
        if name in SCENARIOS:
            raise ValidationError(f"extra trace name {name!r} collides with a built-in scenario")
        if other.counts.shape[1:] != trace.counts.shape[1:]:
            raise DimensionMismatchError(f"trace {name!r} has a different layer/expert shape")
        other_begin = min(begin, other.num_iterations - 1)
        other_placement = [
            [contiguous_baseline(_window_loads(other, l, other_begin, other.num_iterations), num_groups)]
            for l in layers
        ]
        reports.append(
            ScenarioReport(
                scenario=name,
                total_params=count_params(structure, [trace.num_experts] * len(layers), overhead),
                experts_per_layer=[trace.num_experts] * len(layers),
                mean_step_time=mean_step_time(
                    other,
                    [all_experts] * len(layers),
                    other_placement,
                    other_begin,
                    other.num_iterations,
                    expert_cost_ratio * other.total_slots / other.num_experts,
                ),
            )
        )

    base_time = reports[0].mean_step_time
    for report in reports:
        report.relative_throughput = base_time / report.mean_step_time if report.mean_step_time > 0 else 1.0
        logger.info(
            f"{report.scenario}: params={report.total_params}, step_time={report.mean_step_time:.2f}, "
            f"relative_throughput={report.relative_throughput:.4f}"
        )
    return reports
