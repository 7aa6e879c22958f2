import math
import numpy as np
from typing import List, Sequence, Set

from laep.utils.exceptions import ValidationError


def prune_layer(
    loads: Sequence[int],
    alpha: float,
    beta: float,
    total_slots: int = None,
    min_survivors: int = 1,
) -> Set[int]:
    """Flags the experts of one layer that satisfy both load constraints.

    Experts are visited in ascending load order (ties: lower index first) while a
    running sum of their loads accumulates. An expert is flagged when, after its
    load has been added, the running sum is below ``beta * total_slots`` and its own
    load is below ``alpha * total_slots / N``. The running sum keeps accumulating
    over every expert, flagged or not.

    Args:
        loads (Sequence[int]): Token-slot counts, one per expert.
        alpha (float): Individual load constraint (``inf`` disables it).
        beta (float): Cumulative load constraint in [0, 1].
        total_slots (int, optional): Slots routed in the layer; must equal ``sum(loads)``.
        min_survivors (int): Highest-load flagged experts are kept until this many survive.
    Returns:
        Set[int]: Indices of the flagged experts.
    """
    loads = np.asarray(loads, dtype=np.int64)
    n = len(loads)
    if n < 1:
        raise ValidationError("prune_layer needs at least one expert")
    if (loads < 0).any():
        raise ValidationError(f"loads must be non-negative, got {loads.tolist()}")
    if alpha < 0 or not 0 <= beta <= 1:
        raise ValidationError(f"alpha must be >= 0 and beta in [0, 1], got alpha={alpha}, beta={beta}")

    load_sum = int(loads.sum())
    if total_slots is None:
        total_slots = load_sum
    elif total_slots != load_sum:
        raise ValidationError(f"total_slots ({total_slots}) does not match sum of loads ({load_sum})")

    alpha_threshold = math.inf if math.isinf(alpha) else alpha * total_slots / n
    beta_threshold = beta * total_slots

    flagged = []
    running = 0
    for idx in np.argsort(loads, kind="stable"):
        load = int(loads[idx])
        running += load
        if running < beta_threshold and load < alpha_threshold:
            flagged.append(int(idx))

    # flagged is in ascending load order, so trimming from the end keeps the heaviest.
    keep = max(min_survivors, 1)
    while flagged and n - len(flagged) < keep:
        flagged.pop()

    return set(flagged)


def alpha_schedule_constant(num_layers: int, alpha: float) -> List[float]:
    if num_layers < 1:
        raise ValidationError(f"num_layers must be positive, got {num_layers}")
    return [float(alpha)] * num_layers


def alpha_schedule_hybrid(num_layers: int, alpha_edge: float, alpha_mid: float) -> List[float]:
    """Uses ``alpha_edge`` on the first and last ceil(L/6) layers and ``alpha_mid`` elsewhere."""
    if num_layers < 1:
        raise ValidationError(f"num_layers must be positive, got {num_layers}")
    edge = math.ceil(num_layers / 6)
    return [
        float(alpha_edge) if layer < edge or layer >= num_layers - edge else float(alpha_mid)
        for layer in range(num_layers)
    ]
