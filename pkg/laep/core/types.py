import numpy as np
from dataclasses import dataclass, field, asdict
from typing import Optional

from laep.utils.exceptions import ValidationError, DimensionMismatchError


@dataclass(frozen=True)
class ModelStructure:
    """Layer, expert and width description of an MoE model, used for routing and parameter accounting."""

    num_layers: int
    experts_per_layer: int
    top_k: int
    hidden_size: int
    ffn_hidden_size: int
    num_attention_heads: int = 1
    attention_hidden_size: int = 1

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValidationError(f"ModelStructure.{name} must be a positive integer, got {value!r}")
        if self.top_k > self.experts_per_layer:
            raise ValidationError(
                f"top_k ({self.top_k}) cannot exceed experts_per_layer ({self.experts_per_layer})"
            )

    def __state_dict__(self):
        return asdict(self)


@dataclass(frozen=True)
class ExpertTokenCounts:
    """Routed-token counts indexed ``[iteration, layer, expert]``.

    The array is stored as a read-only int64 copy. Conservation (every row sums to
    ``tokens_per_iter * top_k``) is checked by ``check_conservation`` rather than here,
    so that malformed traces can still be represented and reported on.
    """

    counts: np.ndarray
    tokens_per_iter: int
    top_k: int = 1

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if counts.ndim != 3:
            raise DimensionMismatchError(
                f"counts must be 3-dimensional [iteration, layer, expert], got shape {counts.shape}"
            )
        if counts.size == 0:
            raise ValidationError(f"counts must be non-empty, got shape {counts.shape}")
        if (counts < 0).any():
            it, layer, expert = np.argwhere(counts < 0)[0]
            raise ValidationError(
                f"negative token count at iteration {it}, layer {layer}, expert {expert}"
            )
        if self.tokens_per_iter < 1 or self.top_k < 1:
            raise ValidationError(
                f"tokens_per_iter and top_k must be positive, got {self.tokens_per_iter} and {self.top_k}"
            )
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    @property
    def num_iterations(self) -> int:
        return self.counts.shape[0]

    @property
    def num_layers(self) -> int:
        return self.counts.shape[1]

    @property
    def num_experts(self) -> int:
        return self.counts.shape[2]

    @property
    def total_slots(self) -> int:
        return self.tokens_per_iter * self.top_k

    def __eq__(self, other):
        if not isinstance(other, ExpertTokenCounts):
            return NotImplemented
        return (
            self.tokens_per_iter == other.tokens_per_iter
            and self.top_k == other.top_k
            and np.array_equal(self.counts, other.counts)
        )

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(iterations={self.num_iterations}, layers={self.num_layers}, "
            f"experts={self.num_experts}, tokens_per_iter={self.tokens_per_iter}, top_k={self.top_k})"
        )


@dataclass(frozen=True)
class LoadSnapshot:
    """Per-expert token loads of one layer over one iteration window."""

    layer: int
    loads: np.ndarray

    def __post_init__(self):
        loads = np.array(self.loads, dtype=np.int64, copy=True)
        if loads.ndim != 1:
            raise DimensionMismatchError(f"loads must be 1-dimensional, got shape {loads.shape}")
        if (loads < 0).any():
            raise ValidationError(f"loads must be non-negative, got {loads.tolist()}")
        loads.flags.writeable = False
        object.__setattr__(self, "loads", loads)

    def __len__(self):
        return len(self.loads)


@dataclass(frozen=True)
class LoadStats:
    mean: float
    coefficient_of_variation: float
    max_min_ratio: float
    spearman_vs_previous: Optional[float] = field(default=None)

    def __state_dict__(self):
        return asdict(self)
