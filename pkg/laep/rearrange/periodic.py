from dataclasses import dataclass
from typing import List, Sequence

from laep.core import ExpertTokenCounts, reroute_rows
from laep.rearrange.greedy import GroupAssignment, rearrange
from laep.utils.exceptions import ValidationError


@dataclass(frozen=True)
class LayerPlacement:
    layer: int
    assignment: GroupAssignment
    iter_begin: int = None


def place_layer(
    trace: ExpertTokenCounts,
    layer: int,
    survivors: Sequence[int],
    num_groups: int,
    iter_begin: int,
    iter_end: int,
) -> GroupAssignment:
    """Rearranges a layer's survivors on their loads over ``[iter_begin, iter_end)``.

    Slots of pruned experts are first rerouted onto the survivors.
    """
    if not 0 <= layer < trace.num_layers:
        raise ValidationError(f"layer {layer} outside 0..{trace.num_layers - 1}")
    if not 0 <= iter_begin < iter_end <= trace.num_iterations:
        raise ValidationError(f"range [{iter_begin}, {iter_end}) is empty or outside the trace")
    survivors = list(survivors)
    loads = reroute_rows(trace.counts[iter_begin:iter_end, layer], survivors).sum(axis=0)
    return rearrange(loads[survivors], num_groups, expert_ids=survivors)


def rearrange_periodic(
    trace: ExpertTokenCounts,
    layer: int,
    survivors: Sequence[int],
    num_groups: int,
    period: int,
    iter_begin: int = 0,
    iter_end: int = None,
) -> List[LayerPlacement]:
    """Re-runs the greedy placement on each consecutive window of ``period`` iterations.

    The last window may be shorter than ``period``.
    """
    if period < 1:
        raise ValidationError(f"period must be positive, got {period}")
    iter_end = trace.num_iterations if iter_end is None else iter_end
    if not 0 <= iter_begin < iter_end <= trace.num_iterations:
        raise ValidationError(f"range [{iter_begin}, {iter_end}) is empty or outside the trace")

    return [
        LayerPlacement(
            layer=layer,
            assignment=place_layer(trace, layer, survivors, num_groups, start, min(start + period, iter_end)),
            iter_begin=start,
        )
        for start in range(iter_begin, iter_end, period)
    ]
