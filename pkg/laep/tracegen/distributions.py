import numpy as np
from abc import ABC, abstractmethod

from laep.utils.exceptions import ValidationError


class ShareSchedule(ABC):
    """Produces the per-iteration expert share vectors of one layer.

    Each layer is generated from its own random stream, so a schedule must draw
    everything (including the permutation of expert identities) from ``rng``.
    """

    @property
    @abstractmethod
    def name(self) -> str:
        ...

    @abstractmethod
    def share_matrix(
        self, num_experts: int, num_iterations: int, rng: np.random.Generator
    ) -> np.ndarray:
        """Returns a ``[num_iterations, num_experts]`` matrix whose rows sum to 1."""

    def __repr__(self):
        return f"{self.__class__.__name__}(name={self.name})"


def zipf_shares(num_experts: int, s: float) -> np.ndarray:
    weights = np.arange(1, num_experts + 1, dtype=np.float64) ** (-s)
    return weights / weights.sum()


class UniformSchedule(ShareSchedule):
    @property
    def name(self) -> str:
        return "uniform"

    def __init__(self, **kwargs):
        pass

    def share_matrix(self, num_experts, num_iterations, rng):
        return np.full((num_iterations, num_experts), 1.0 / num_experts)


class ZipfSchedule(ShareSchedule):
    """Stationary Zipf shares; expert ``perm[i]`` receives the share of rank ``i``."""

    @property
    def name(self) -> str:
        return "zipf"

    def __init__(self, zipf_s: float = 1.2, **kwargs):
        if not zipf_s > 0:
            raise ValidationError(f"zipf_s must be > 0, got {zipf_s}")
        self.zipf_s = zipf_s

    def share_matrix(self, num_experts, num_iterations, rng):
        shares = zipf_shares(num_experts, self.zipf_s)[rng.permutation(num_experts)]
        return np.broadcast_to(shares, (num_iterations, num_experts)).copy()


class TwoPhaseSchedule(ShareSchedule):
    """Volatile transition followed by a stable, slightly jittered Zipf ranking.

    During the first ``transition_iters`` iterations the log-shares are a blend of a
    fast mean-reverting random walk and the final Zipf log-shares, with the walk's
    weight falling linearly to zero. Afterwards each iteration uses the final shares
    perturbed by at most ``drift`` relative change, independently per iteration.
    """

    # Per-iteration autocorrelation and stationary spread of the transition walk.
    walk_rho = 0.95
    walk_scale = 2.0

    @property
    def name(self) -> str:
        return "two_phase"

    def __init__(
        self, transition_iters: int = 200, drift: float = 0.05, zipf_s: float = 1.2, **kwargs
    ):
        if transition_iters < 0:
            raise ValidationError(f"transition_iters must be >= 0, got {transition_iters}")
        if not 0 <= drift <= 1:
            raise ValidationError(f"drift must be in [0, 1], got {drift}")
        if not zipf_s > 0:
            raise ValidationError(f"zipf_s must be > 0, got {zipf_s}")
        self.transition_iters = transition_iters
        self.drift = drift
        self.zipf_s = zipf_s

    def share_matrix(self, num_experts, num_iterations, rng):
        if self.transition_iters >= num_iterations:
            raise ValidationError(
                f"transition_iters ({self.transition_iters}) must be < num_iterations ({num_iterations})"
            )
        target = np.log(zipf_shares(num_experts, self.zipf_s)[rng.permutation(num_experts)])

        shares = np.empty((num_iterations, num_experts))
        walk = rng.normal(0.0, self.walk_scale, num_experts)
        innovation = self.walk_scale * np.sqrt(1.0 - self.walk_rho**2)
        for t in range(self.transition_iters):
            walk = self.walk_rho * walk + rng.normal(0.0, innovation, num_experts)
            weight = t / self.transition_iters
            logits = (1.0 - weight) * walk + weight * target
            shares[t] = np.exp(logits - logits.max())

        stable = np.exp(target)
        for t in range(self.transition_iters, num_iterations):
            shares[t] = stable * (1.0 + rng.uniform(-self.drift, self.drift, num_experts))

        return shares / shares.sum(axis=1, keepdims=True)


DISTRIBUTIONS = {
    UniformSchedule().name: UniformSchedule,
    ZipfSchedule().name: ZipfSchedule,
    TwoPhaseSchedule().name: TwoPhaseSchedule,
}
