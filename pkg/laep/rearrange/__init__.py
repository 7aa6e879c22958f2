from .greedy import (
    GroupAssignment,
    BalanceMetrics,
    rearrange,
    contiguous_baseline,
    balance_metrics,
    remove_experts,
)
from .periodic import LayerPlacement, place_layer, rearrange_periodic
from .io import write_placement, read_placement, placement_to_list, placement_from_list
