from loguru import logger

from laep.core import ExpertTokenCounts, check_conservation
from laep.pruning.markers import PruneConfig, PruneDecision, accumulate_markers, select_pruned
from laep.utils.exceptions import StabilityNotFoundError


def marker_range(trace: ExpertTokenCounts, config: PruneConfig) -> tuple:
    """Detects the stable iteration and returns the ``[begin, end)`` marker window."""
    begin = config.stability.detect(trace)
    if begin >= trace.num_iterations:
        raise StabilityNotFoundError(
            f"stable iteration {begin} ({config.stability}) leaves no iterations in a "
            f"trace of {trace.num_iterations}"
        )
    end = trace.num_iterations
    if config.marker_window:
        end = min(begin + config.marker_window, end)
    return begin, end


def prune(trace: ExpertTokenCounts, config: PruneConfig, top_k: int = None) -> PruneDecision:
    """Runs stability detection, marker accumulation and selection over a trace.

    Args:
        trace (ExpertTokenCounts): Routing trace to prune from.
        config (PruneConfig): α schedule, β, stability rule and marker window.
        top_k (int, optional): Experts per token; defaults to the trace's ``top_k``.
            Every layer keeps at least ``max(top_k, 1)`` experts.
    Returns:
        PruneDecision: per-layer pruned experts, markers and survivors.
    """
    check_conservation(trace)
    config.check_layers(trace.num_layers)
    top_k = trace.top_k if top_k is None else top_k

    begin, end = marker_range(trace, config)
    logger.info(f"Accumulating markers over iterations [{begin}, {end}) of {trace.num_iterations}")

    markers, exp_dis = accumulate_markers(trace, config, begin, end)
    decision = select_pruned(
        markers,
        exp_dis,
        min_survivors=max(top_k, 1),
        beta=config.beta,
        alpha=config.alpha_schedule,
        stable_iteration=begin,
        window=(begin, end),
    )

    for layer in decision.layers:
        logger.debug(
            f"Layer {layer.layer}: alpha={config.alpha_schedule[layer.layer]}, "
            f"pruned {list(layer.pruned)}, markers {list(layer.markers)}"
        )
    logger.info(
        f"Pruned {decision.num_pruned} of {trace.num_layers * trace.num_experts} experts "
        f"(per layer: {[len(d.pruned) for d in decision.layers]})"
    )
    return decision
