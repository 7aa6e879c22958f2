from .criteria import prune_layer, alpha_schedule_constant, alpha_schedule_hybrid
from .stability import (
    StabilityRule,
    FixedIteration,
    RankCorrelation,
    STABILITY_RULES,
    parse_stability,
    detect_stability,
)
from .markers import (
    PruneConfig,
    PruneDecision,
    LayerDecision,
    accumulate_markers,
    rank_by_markers,
    select_pruned,
)
from .engine import prune, marker_range
from .io import write_decision, read_decision, decision_to_dict, decision_from_dict
