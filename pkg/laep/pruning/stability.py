import numpy as np
from abc import ABC, abstractmethod
from loguru import logger

from laep.core import ExpertTokenCounts, spearman
from laep.utils.exceptions import ConfigError, StabilityNotFoundError, ValidationError


class StabilityRule(ABC):
    """Decides the first iteration from which expert loads are considered stable."""

    @property
    @abstractmethod
    def name(self) -> str:
        ...

    @abstractmethod
    def detect(self, trace: ExpertTokenCounts) -> int:
        ...

    @abstractmethod
    def __str__(self) -> str:
        ...


class FixedIteration(StabilityRule):
    @property
    def name(self) -> str:
        return "fixed"

    def __init__(self, iteration: int = 0):
        if iteration < 0:
            raise ValidationError(f"fixed stability iteration must be >= 0, got {iteration}")
        self.iteration = iteration

    def detect(self, trace: ExpertTokenCounts) -> int:
        return self.iteration

    def __str__(self):
        return f"fixed:{self.iteration}"


class RankCorrelation(StabilityRule):
    """Stable once every layer's window ranking correlates with the previous window.

    The window ending at ``t`` covers iterations ``[t - window, t)``; ``t`` is stable
    when, for every layer, Spearman(window ending at t, window ending at t - window)
    is at least ``threshold``.
    """

    @property
    def name(self) -> str:
        return "rank"

    def __init__(self, threshold: float = 0.95, window: int = 50):
        if not 0 < threshold <= 1:
            raise ValidationError(f"rank threshold must be in (0, 1], got {threshold}")
        if window < 1:
            raise ValidationError(f"rank window must be positive, got {window}")
        self.threshold = threshold
        self.window = window

    def detect(self, trace: ExpertTokenCounts) -> int:
        w = self.window
        if trace.num_iterations < 2 * w:
            raise StabilityNotFoundError(
                f"trace has {trace.num_iterations} iterations, need at least {2 * w} for two windows of {w}"
            )

        cumulative = np.zeros((trace.num_iterations + 1,) + trace.counts.shape[1:], dtype=np.int64)
        np.cumsum(trace.counts, axis=0, out=cumulative[1:])

        for t in range(2 * w, trace.num_iterations + 1):
            current = cumulative[t] - cumulative[t - w]
            previous = cumulative[t - w] - cumulative[t - 2 * w]
            if all(
                spearman(current[layer], previous[layer]) >= self.threshold
                for layer in range(trace.num_layers)
            ):
                logger.info(f"Expert loads stable from iteration {t} ({self})")
                return t

        raise StabilityNotFoundError(
            f"no iteration satisfies {self} within {trace.num_iterations} iterations"
        )

    def __str__(self):
        return f"rank:{self.threshold}:{self.window}"


STABILITY_RULES = {
    FixedIteration().name: FixedIteration,
    RankCorrelation().name: RankCorrelation,
}


def parse_stability(text: str) -> StabilityRule:
    """Parses ``fixed:<k>`` or ``rank:<rho>:<w>``."""
    name, *params = text.split(":")
    if name not in STABILITY_RULES:
        raise ConfigError(
            f"Stability rule {name!r} not supported. Please choose from {list(STABILITY_RULES)}",
            key="stability",
        )
    try:
        if name == "fixed":
            (iteration,) = params
            return FixedIteration(int(iteration))
        threshold, window = params
        return RankCorrelation(float(threshold), int(window))
    except ValueError:
        raise ConfigError(f"Malformed stability rule {text!r}", key="stability")


def detect_stability(trace: ExpertTokenCounts, rule: StabilityRule) -> int:
    return rule.detect(trace)
