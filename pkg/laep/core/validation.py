import numpy as np
from loguru import logger

from laep.core.types import ExpertTokenCounts, ModelStructure
from laep.utils.exceptions import ConservationError, DimensionMismatchError


def check_conservation(trace: ExpertTokenCounts):
    """Raises ``ConservationError`` at the first (iteration, layer) whose row does not sum to S * top_k."""
    expected = trace.total_slots
    row_sums = trace.counts.sum(axis=2, dtype=np.int64)
    bad = np.argwhere(row_sums != expected)
    if len(bad):
        it, layer = (int(x) for x in bad[0])
        raise ConservationError(it, layer, int(row_sums[it, layer]), expected)


def validate_trace(trace: ExpertTokenCounts, structure: ModelStructure) -> bool:
    """Checks a trace against a model structure.

    Returns:
        bool: True when dimensions match and every row conserves S * top_k slots.
    """
    if trace.num_layers != structure.num_layers:
        raise DimensionMismatchError(
            f"trace has {trace.num_layers} layers, structure expects {structure.num_layers}"
        )
    if trace.num_experts != structure.experts_per_layer:
        raise DimensionMismatchError(
            f"trace has {trace.num_experts} experts per layer, structure expects {structure.experts_per_layer}"
        )
    if trace.top_k != structure.top_k:
        raise DimensionMismatchError(
            f"trace was recorded with top_k={trace.top_k}, structure expects {structure.top_k}"
        )

    check_conservation(trace)
    logger.debug(f"Validated {trace!r} against {structure}")
    return True
