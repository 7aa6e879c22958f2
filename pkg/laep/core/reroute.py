import numpy as np
from typing import Sequence

from laep.utils.exceptions import ValidationError


def _survivor_index(num_experts: int, survivors: Sequence[int]) -> np.ndarray:
    survivors = np.asarray(list(survivors), dtype=np.int64)
    if len(survivors) == 0:
        raise ValidationError("at least one expert must survive")
    if len(np.unique(survivors)) != len(survivors):
        raise ValidationError(f"survivors must be distinct, got {survivors.tolist()}")
    if survivors.min() < 0 or survivors.max() >= num_experts:
        raise ValidationError(f"survivors {survivors.tolist()} outside 0..{num_experts - 1}")
    return survivors


def reroute_rows(counts: np.ndarray, survivors: Sequence[int]) -> np.ndarray:
    """Moves the slots of pruned experts onto survivors, one row per iteration.

    Each row's pruned slots are split over the survivors in proportion to their
    loads in that row (largest remainder, ties to the lower index). Rows where every
    survivor carries zero load split the slots evenly. Pruned columns come back zero.
    """
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 2:
        raise ValidationError(f"expected a 2-D [iterations, experts] array, got shape {counts.shape}")
    survivors = _survivor_index(counts.shape[1], survivors)

    kept = counts[:, survivors]
    moved = counts.sum(axis=1) - kept.sum(axis=1)

    weights = kept.copy()
    weights[kept.sum(axis=1) == 0] = 1
    total = weights.sum(axis=1, keepdims=True)

    share = moved[:, None] * weights
    extra = share // total
    remainder = share % total
    leftover = moved - extra.sum(axis=1)

    order = np.argsort(-remainder, axis=1, kind="stable")
    rank = np.argsort(order, axis=1, kind="stable")
    extra += rank < leftover[:, None]

    rerouted = np.zeros_like(counts)
    rerouted[:, survivors] = kept + extra
    return rerouted


def reroute_pruned(loads: Sequence[int], survivors: Sequence[int]) -> np.ndarray:
    """Single-row form of :func:`reroute_rows`; the total load is conserved."""
    loads = np.asarray(loads, dtype=np.int64)
    if loads.ndim != 1:
        raise ValidationError(f"loads must be 1-D, got shape {loads.shape}")
    if (loads < 0).any():
        raise ValidationError("loads must be non-negative")
    return reroute_rows(loads[None, :], survivors)[0]
