import numpy as np
from dataclasses import dataclass
from typing import Tuple

from laep.utils.exceptions import ValidationError


@dataclass
class SyntheticTask:
    """Gaussian-cluster classification with Zipf-skewed class frequencies.

    Every sequence has a dominant class: a ``sequence_focus`` fraction of its tokens
    (in expectation) come from that class, the rest from the global class mix.
    """

    num_classes: int
    hidden_size: int
    noise_scale: float = 0.5
    seed: int = 0
    class_skew: float = 1.0
    sequence_focus: float = 0.5
    cluster_centers: np.ndarray = None

    def __post_init__(self):
        if self.num_classes < 2 or self.hidden_size < 1:
            raise ValidationError(
                f"need at least 2 classes and hidden_size >= 1, got {self.num_classes} and {self.hidden_size}"
            )
        if self.noise_scale <= 0:
            raise ValidationError(f"noise_scale must be > 0, got {self.noise_scale}")
        if self.class_skew < 0 or not 0 <= self.sequence_focus <= 1:
            raise ValidationError("class_skew must be >= 0 and sequence_focus in [0, 1]")

        if self.cluster_centers is None:
            rng = np.random.default_rng(np.random.SeedSequence(self.seed & 0xFFFFFFFFFFFFFFFF))
            self.cluster_centers = rng.standard_normal((self.num_classes, self.hidden_size))
        self.cluster_centers = np.asarray(self.cluster_centers, dtype=np.float64)
        if self.cluster_centers.shape != (self.num_classes, self.hidden_size):
            raise ValidationError(
                f"cluster_centers must be [{self.num_classes} x {self.hidden_size}], got {self.cluster_centers.shape}"
            )
        if len(np.unique(self.cluster_centers, axis=0)) != self.num_classes:
            raise ValidationError("cluster centers must be pairwise distinct")

    @property
    def class_frequencies(self) -> np.ndarray:
        weights = 1.0 / np.arange(1, self.num_classes + 1) ** self.class_skew
        return weights / weights.sum()

    def sample(self, num_tokens: int, sequence_length: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Draws ``num_tokens`` inputs ``[S x hidden]`` and their labels ``[S]``."""
        if num_tokens % sequence_length:
            raise ValidationError(f"sequence_length {sequence_length} does not divide {num_tokens} tokens")
        freqs = self.class_frequencies
        num_sequences = num_tokens // sequence_length

        dominant = np.repeat(rng.choice(self.num_classes, size=num_sequences, p=freqs), sequence_length)
        background = rng.choice(self.num_classes, size=num_tokens, p=freqs)
        labels = np.where(rng.random(num_tokens) < self.sequence_focus, dominant, background)

        noise = rng.standard_normal((num_tokens, self.hidden_size))
        return self.cluster_centers[labels] + self.noise_scale * noise, labels

    def __state_dict__(self):
        return {
            "num_classes": self.num_classes,
            "hidden_size": self.hidden_size,
            "noise_scale": self.noise_scale,
            "seed": self.seed,
            "class_skew": self.class_skew,
            "sequence_focus": self.sequence_focus,
        }
