import numpy as np
from typing import Optional, Sequence
from scipy.stats import spearmanr

from laep.core.types import ExpertTokenCounts, LoadSnapshot, LoadStats
from laep.utils.exceptions import ValidationError, DimensionMismatchError


def spearman(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman rank correlation with average ranks for ties.

    Rank correlation is undefined when either side is constant: two constant
    vectors count as perfectly correlated, a single constant side as uncorrelated.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"Cannot correlate shapes {a.shape} and {b.shape}")
    if a.size == 0:
        raise ValidationError("Cannot correlate empty vectors")

    a_constant = np.ptp(a) == 0
    b_constant = np.ptp(b) == 0
    if a_constant and b_constant:
        return 1.0
    if a_constant or b_constant:
        return 0.0

    rho = spearmanr(a, b).correlation
    return float(np.clip(rho, -1.0, 1.0))


def load_stats(snapshot: LoadSnapshot, previous: Optional[LoadSnapshot] = None) -> LoadStats:
    """Mean, coefficient of variation, max/min ratio and rank stability of a load snapshot.

    Args:
        snapshot (LoadSnapshot): Loads to summarize.
        previous (LoadSnapshot, optional): Earlier snapshot of the same layer. When given,
            the Spearman correlation against it is reported.
    Returns:
        LoadStats: CoV uses the population standard deviation and is 0 for an all-zero
            snapshot; max/min is +inf when the least loaded expert received nothing.
    """
    if len(snapshot) == 0:
        raise ValidationError("Cannot compute load statistics of an empty snapshot")

    loads = snapshot.loads.astype(np.float64)
    mean = float(loads.mean())
    cov = float(loads.std() / mean) if mean > 0 else 0.0

    lo, hi = loads.min(), loads.max()
    ratio = float(hi / lo) if lo > 0 else float("inf")

    rho = None
    if previous is not None:
        if len(previous) != len(snapshot):
            raise DimensionMismatchError(
                f"previous snapshot has {len(previous)} experts, expected {len(snapshot)}"
            )
        rho = spearman(snapshot.loads, previous.loads)

    return LoadStats(
        mean=mean,
        coefficient_of_variation=cov,
        max_min_ratio=ratio,
        spearman_vs_previous=rho,
    )


def window_aggregate(
    trace: ExpertTokenCounts, layer: int, iter_begin: int, iter_end: int
) -> LoadSnapshot:
    """Sums a layer's per-expert counts over iterations ``[iter_begin, iter_end)``."""
    if not 0 <= layer < trace.num_layers:
        raise ValidationError(f"layer {layer} out of range [0, {trace.num_layers})")
    if not 0 <= iter_begin < iter_end <= trace.num_iterations:
        raise ValidationError(
            f"iteration window [{iter_begin}, {iter_end}) out of range for {trace.num_iterations} iterations"
        )
    loads = trace.counts[iter_begin:iter_end, layer, :].sum(axis=0, dtype=np.int64)
    return LoadSnapshot(layer=layer, loads=loads)
