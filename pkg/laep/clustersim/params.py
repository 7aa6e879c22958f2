from dataclasses import asdict, dataclass
from typing import Sequence

from laep.core import ModelStructure
from laep.utils.exceptions import DimensionMismatchError, ValidationError


@dataclass(frozen=True)
class ParamBreakdown:
    attention: int
    router: int
    experts: int
    overhead: int

    @property
    def total(self) -> int:
        return self.attention + self.router + self.experts + self.overhead

    def __state_dict__(self):
        return {**asdict(self), "total": self.total}


def param_breakdown(structure: ModelStructure, experts_per_layer: Sequence[int], overhead: int = 0) -> ParamBreakdown:
    """Splits the parameter count into attention, router, expert and fixed parts.

    Per layer: attention ``4 * h * heads * attn_hidden``, router ``h * N`` (the
    router keeps one column per original expert, pruned columns masked) and
    ``experts_per_layer[l] * 2 * h * ffn`` for the experts.
    """
    experts_per_layer = [int(n) for n in experts_per_layer]
    if len(experts_per_layer) != structure.num_layers:
        raise DimensionMismatchError(
            f"experts_per_layer has {len(experts_per_layer)} entries for {structure.num_layers} layers"
        )
    if any(n < 1 for n in experts_per_layer):
        raise ValidationError(f"every layer needs at least one expert, got {experts_per_layer}")
    if any(n > structure.experts_per_layer for n in experts_per_layer):
        raise ValidationError(
            f"experts_per_layer {experts_per_layer} exceeds the {structure.experts_per_layer} experts of the structure"
        )
    if overhead < 0:
        raise ValidationError(f"overhead must be >= 0, got {overhead}")

    h = structure.hidden_size
    layers = structure.num_layers
    return ParamBreakdown(
        attention=layers * 4 * h * structure.num_attention_heads * structure.attention_hidden_size,
        router=layers * h * structure.experts_per_layer,
        experts=sum(experts_per_layer) * 2 * h * structure.ffn_hidden_size,
        overhead=int(overhead),
    )


def count_params(structure: ModelStructure, experts_per_layer: Sequence[int], overhead: int = 0) -> int:
    return param_breakdown(structure, experts_per_layer, overhead).total
