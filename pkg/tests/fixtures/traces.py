import numpy as np

from laep.core import ExpertTokenCounts, ModelStructure
from laep.tracegen import TraceGenSpec, generate

FOUR_EXPERT_LOADS = [120, 61, 14, 5]
SIX_EXPERT_LOADS = [10, 8, 6, 4, 3, 1]
UNIFORM_LOADS = [50, 50, 50, 50]

# (loads, alpha, beta, pruned indices)
PRUNE_CASES = [
    (FOUR_EXPERT_LOADS, 0.4, 0.1, {2, 3}),
    (UNIFORM_LOADS, 0.4, 0.1, set()),
    (FOUR_EXPERT_LOADS, float("inf"), 0.05, {3}),
    (FOUR_EXPERT_LOADS, 0.4, 0.0, set()),
    (FOUR_EXPERT_LOADS, 0.0, 0.1, set()),
]

ALPHAS = [0.0, 0.2, 0.4, 0.6, float("inf")]
BETAS = [0.0, 0.05, 0.1, 0.2, 0.4]


def constant_trace(loads, num_iterations=3, num_layers=1, top_k=1) -> ExpertTokenCounts:
    """Every (iteration, layer) row equals ``loads``."""
    counts = np.tile(np.asarray(loads, dtype=np.int64), (num_iterations, num_layers, 1))
    return ExpertTokenCounts(counts=counts, tokens_per_iter=sum(loads) // top_k, top_k=top_k)


def rows_trace(rows, top_k=1) -> ExpertTokenCounts:
    """One layer, one iteration per row."""
    counts = np.asarray(rows, dtype=np.int64)[:, None, :]
    return ExpertTokenCounts(counts=counts, tokens_per_iter=int(counts[0, 0].sum()) // top_k, top_k=top_k)


def zipf_trace(num_layers=4, num_experts=64, top_k=2, num_iterations=200, tokens_per_iter=2048, seed=7):
    structure = ModelStructure(
        num_layers=num_layers,
        experts_per_layer=num_experts,
        top_k=top_k,
        hidden_size=1024,
        ffn_hidden_size=4096,
        num_attention_heads=4,
        attention_hidden_size=256,
    )
    spec = TraceGenSpec(
        structure=structure,
        num_iterations=num_iterations,
        tokens_per_iter=tokens_per_iter,
        distribution="zipf",
        seed=seed,
    )
    return generate(spec), structure


def two_phase_trace(seed=11):
    structure = ModelStructure(num_layers=4, experts_per_layer=16, top_k=2, hidden_size=16, ffn_hidden_size=32)
    spec = TraceGenSpec(
        structure=structure,
        num_iterations=600,
        tokens_per_iter=4096,
        distribution="two_phase",
        transition_iters=200,
        seed=seed,
    )
    return generate(spec), structure
