import numpy as np
from dataclasses import dataclass, asdict
from loguru import logger

from laep.core import ModelStructure, ExpertTokenCounts, check_conservation
from laep.tracegen.distributions import DISTRIBUTIONS, ShareSchedule
from laep.utils.config import load_kv_file, REQUIRED
from laep.utils.exceptions import ValidationError

GEN_SPEC_FIELDS = {
    "layers": (int, REQUIRED),
    "experts": (int, REQUIRED),
    "top_k": (int, REQUIRED),
    "iterations": (int, REQUIRED),
    "tokens_per_iter": (int, REQUIRED),
    "distribution": (str, "zipf"),
    "zipf_s": (float, 1.2),
    "transition_iters": (int, 200),
    "drift": (float, 0.05),
    "seed": (int, 0),
}


@dataclass(frozen=True)
class TraceGenSpec:
    structure: ModelStructure
    num_iterations: int
    tokens_per_iter: int
    distribution: str = "zipf"
    zipf_s: float = 1.2
    transition_iters: int = 200
    drift: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.num_iterations < 1:
            raise ValidationError(f"num_iterations must be positive, got {self.num_iterations}")
        if self.tokens_per_iter < 1:
            raise ValidationError(f"tokens_per_iter must be positive, got {self.tokens_per_iter}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValidationError(
                f"Distribution {self.distribution!r} not supported. Please choose from {list(DISTRIBUTIONS)}"
            )
        if self.distribution == "two_phase" and self.transition_iters >= self.num_iterations:
            raise ValidationError(
                f"transition_iters ({self.transition_iters}) must be < iterations ({self.num_iterations})"
            )

    def schedule(self) -> ShareSchedule:
        cls = DISTRIBUTIONS[self.distribution]
        return cls(
            zipf_s=self.zipf_s, transition_iters=self.transition_iters, drift=self.drift
        )

    def __state_dict__(self):
        state = asdict(self)
        state["structure"] = self.structure.__state_dict__()
        return state


def load_gen_spec(path: str, seed: int = None) -> TraceGenSpec:
    """Reads a flat key-value generation spec; ``seed`` overrides the file's seed."""
    values = load_kv_file(path, GEN_SPEC_FIELDS)
    # Trace generation only needs layers, experts and top_k; widths are placeholders.
    structure = ModelStructure(
        num_layers=values["layers"],
        experts_per_layer=values["experts"],
        top_k=values["top_k"],
        hidden_size=1,
        ffn_hidden_size=1,
    )
    return TraceGenSpec(
        structure=structure,
        num_iterations=values["iterations"],
        tokens_per_iter=values["tokens_per_iter"],
        distribution=values["distribution"],
        zipf_s=values["zipf_s"],
        transition_iters=values["transition_iters"],
        drift=values["drift"],
        seed=values["seed"] if seed is None else seed,
    )


def sample_routing(
    shares: np.ndarray, tokens: int, top_k: int, rng: np.random.Generator
) -> np.ndarray:
    """Routes ``tokens`` tokens to ``top_k`` distinct experts each, proportionally to ``shares``.

    Uses the Gumbel-top-k trick, which is equivalent to drawing ``top_k`` experts
    one after another without replacement. Returns per-expert slot counts.
    """
    num_experts = len(shares)
    if top_k == 1:
        return rng.multinomial(tokens, shares).astype(np.int64)

    with np.errstate(divide="ignore"):
        keys = np.log(shares)[None, :] + rng.gumbel(size=(tokens, num_experts))
    chosen = np.argpartition(-keys, top_k - 1, axis=1)[:, :top_k]
    return np.bincount(chosen.ravel(), minlength=num_experts).astype(np.int64)


def generate(spec: TraceGenSpec) -> ExpertTokenCounts:
    """Generates a synthetic routing trace; identical specs give bit-identical traces."""
    structure = spec.structure
    schedule = spec.schedule()
    num_layers, num_experts = structure.num_layers, structure.experts_per_layer

    counts = np.zeros((spec.num_iterations, num_layers, num_experts), dtype=np.int64)
    # One independent stream per layer keeps layers reproducible in isolation.
    streams = np.random.SeedSequence(spec.seed & 0xFFFFFFFFFFFFFFFF).spawn(num_layers)
    for layer, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        shares = schedule.share_matrix(num_experts, spec.num_iterations, rng)
        for it in range(spec.num_iterations):
            counts[it, layer] = sample_routing(
                shares[it], spec.tokens_per_iter, structure.top_k, rng
            )
        logger.debug(f"Generated layer {layer} with {schedule!r}")

    trace = ExpertTokenCounts(
        counts=counts, tokens_per_iter=spec.tokens_per_iter, top_k=structure.top_k
    )
    check_conservation(trace)
    logger.info(f"Generated {trace!r} ({spec.distribution}, seed={spec.seed})")
    return trace
