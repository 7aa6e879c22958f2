import math
import numpy as np
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

from laep.core import ExpertTokenCounts
from laep.pruning.criteria import prune_layer
from laep.pruning.stability import FixedIteration, StabilityRule
from laep.utils.exceptions import DimensionMismatchError, ValidationError


@dataclass(frozen=True)
class PruneConfig:
    """Per-layer α schedule, β, stability rule and marker window.

    ``marker_window == 0`` accumulates markers from the stable iteration to the end
    of the trace.
    """

    alpha_schedule: Tuple[float, ...]
    beta: float
    stability: StabilityRule = field(default_factory=FixedIteration)
    marker_window: int = 0

    def __post_init__(self):
        object.__setattr__(self, "alpha_schedule", tuple(float(a) for a in self.alpha_schedule))
        if not self.alpha_schedule:
            raise ValidationError("alpha_schedule must have one entry per layer")
        if any(math.isnan(a) or a < 0 for a in self.alpha_schedule):
            raise ValidationError(f"alpha values must be >= 0 or inf, got {list(self.alpha_schedule)}")
        if not 0 <= self.beta <= 1:
            raise ValidationError(f"beta must be in [0, 1], got {self.beta}")
        if self.marker_window < 0:
            raise ValidationError(f"marker_window must be >= 0, got {self.marker_window}")

    @property
    def num_layers(self) -> int:
        return len(self.alpha_schedule)

    def check_layers(self, num_layers: int):
        if self.num_layers != num_layers:
            raise DimensionMismatchError(
                f"alpha_schedule has {self.num_layers} entries but the trace has {num_layers} layers"
            )

    def __state_dict__(self):
        return {
            "alpha": [a if math.isfinite(a) else "inf" for a in self.alpha_schedule],
            "beta": self.beta,
            "stability": str(self.stability),
            "marker_window": self.marker_window,
        }


@dataclass(frozen=True)
class LayerDecision:
    layer: int
    pruned: Tuple[int, ...]
    markers: Tuple[int, ...]
    survivors: Tuple[int, ...]

    def __post_init__(self):
        n = len(self.markers)
        if sorted(self.pruned + self.survivors) != list(range(n)):
            raise ValidationError(f"layer {self.layer}: pruned and survivors must partition 0..{n - 1}")
        if not self.survivors:
            raise ValidationError(f"layer {self.layer}: at least one expert must survive")
        if list(self.survivors) != sorted(self.survivors):
            raise ValidationError(f"layer {self.layer}: survivors must keep their original order")

    @property
    def num_experts(self) -> int:
        return len(self.markers)


@dataclass(frozen=True)
class PruneDecision:
    """Per-layer pruned sets with the markers that produced them."""

    layers: Tuple[LayerDecision, ...]
    beta: float = None
    alpha: Tuple[float, ...] = None
    stable_iteration: int = None
    window: Tuple[int, int] = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if [d.layer for d in self.layers] != list(range(len(self.layers))):
            raise ValidationError("decision layers must be numbered 0..L-1 in order")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def experts_per_layer(self) -> List[int]:
        return [len(d.survivors) for d in self.layers]

    def survivors(self, layer: int) -> List[int]:
        return list(self.layers[layer].survivors)

    def pruned(self, layer: int) -> List[int]:
        return list(self.layers[layer].pruned)

    @property
    def num_pruned(self) -> int:
        return sum(len(d.pruned) for d in self.layers)


def accumulate_markers(
    trace: ExpertTokenCounts, config: PruneConfig, iter_begin: int, iter_end: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Counts, per layer and expert, the iterations in which the expert is flagged.

    Returns:
        markers (np.ndarray): ``[L, N]`` flag counts.
        exp_dis (np.ndarray): ``[L]`` flags per iteration, floored.
    """
    config.check_layers(trace.num_layers)
    if not 0 <= iter_begin < iter_end <= trace.num_iterations:
        raise ValidationError(
            f"marker range [{iter_begin}, {iter_end}) is empty or outside 0..{trace.num_iterations}"
        )

    markers = np.zeros((trace.num_layers, trace.num_experts), dtype=np.int64)
    for layer, alpha in enumerate(config.alpha_schedule):
        for iteration in range(iter_begin, iter_end):
            flagged = prune_layer(
                trace.counts[iteration, layer],
                alpha,
                config.beta,
                total_slots=trace.total_slots,
            )
            markers[layer, list(flagged)] += 1

    exp_dis = markers.sum(axis=1) // (iter_end - iter_begin)
    return markers, exp_dis


def rank_by_markers(row: Sequence[int]) -> List[int]:
    """Expert indices by marker count, descending; ties go to the lower index."""
    return sorted(range(len(row)), key=lambda i: (-int(row[i]), i))


def select_pruned(
    markers: np.ndarray,
    exp_dis: Sequence[int],
    min_survivors: int = 1,
    **metadata,
) -> PruneDecision:
    """Prunes the ``exp_dis[l]`` experts with the most markers in each layer.

    Ties go to the lower expert index. When ``min_survivors`` exceeds
    ``N - exp_dis[l]`` the pruned count is reduced to keep that many experts.
    """
    markers = np.asarray(markers, dtype=np.int64)
    if markers.ndim != 2 or len(exp_dis) != markers.shape[0]:
        raise DimensionMismatchError(
            f"markers {markers.shape} and exp_dis ({len(exp_dis)}) disagree on the layer count"
        )

    layers = []
    for layer, (row, count) in enumerate(zip(markers, exp_dis)):
        n = len(row)
        count = int(count)
        if not 0 <= count < n:
            raise ValidationError(f"layer {layer}: cannot prune {count} of {n} experts")
        count = min(count, n - max(min_survivors, 1))

        pruned = sorted(rank_by_markers(row)[:count])
        survivors = [i for i in range(n) if i not in pruned]
        layers.append(
            LayerDecision(
                layer=layer,
                pruned=tuple(pruned),
                markers=tuple(int(m) for m in row),
                survivors=tuple(survivors),
            )
        )

    return PruneDecision(layers=tuple(layers), **metadata)
