import torch
from abc import ABC, abstractmethod

from laep.utils.exceptions import ConfigError, ValidationError


def _check_inputs(gate_probs: torch.Tensor, assignments: torch.Tensor, num_experts: int):
    if gate_probs.ndim != 2 or gate_probs.shape[1] != num_experts:
        raise ValidationError(f"gate_probs must be [S x {num_experts}], got {tuple(gate_probs.shape)}")
    if assignments.ndim != 2 or assignments.shape[0] != gate_probs.shape[0]:
        raise ValidationError(
            f"assignments must be [S x top_k] with S={gate_probs.shape[0]}, got {tuple(assignments.shape)}"
        )
    if not torch.isfinite(gate_probs).all():
        raise ValidationError("gate_probs contain non-finite values")


def aux_loss_token_level(
    gate_probs: torch.Tensor, assignments: torch.Tensor, c: float, num_experts: int
) -> torch.Tensor:
    """``c * N * sum_i f_i * P_i`` over the whole batch.

    ``f_i`` is the fraction of (token, slot) assignments routed to expert i and ``P_i``
    the mean gate probability of expert i. Only ``P`` carries gradient.
    """
    _check_inputs(gate_probs, assignments, num_experts)
    f = torch.bincount(assignments.reshape(-1), minlength=num_experts).to(gate_probs.dtype) / assignments.numel()
    p = gate_probs.mean(dim=0)
    return c * num_experts * (f * p).sum()


def aux_loss_sequence_wise(
    gate_probs: torch.Tensor, assignments: torch.Tensor, c: float, num_experts: int, sequence_length: int
) -> torch.Tensor:
    """The token-level loss evaluated per sequence of ``sequence_length`` tokens, then averaged."""
    _check_inputs(gate_probs, assignments, num_experts)
    num_tokens = gate_probs.shape[0]
    if sequence_length < 1 or num_tokens % sequence_length:
        raise ValidationError(f"sequence_length {sequence_length} does not divide {num_tokens} tokens")

    losses = [
        aux_loss_token_level(
            gate_probs[start : start + sequence_length],
            assignments[start : start + sequence_length],
            c,
            num_experts,
        )
        for start in range(0, num_tokens, sequence_length)
    ]
    return torch.stack(losses).mean()


class AuxLoss(ABC):
    @property
    @abstractmethod
    def name(self) -> str:
        ...

    @abstractmethod
    def __call__(
        self, gate_probs: torch.Tensor, assignments: torch.Tensor, c: float, num_experts: int, sequence_length: int
    ) -> torch.Tensor:
        ...


class NoAuxLoss(AuxLoss):
    @property
    def name(self) -> str:
        return "none"

    def __call__(self, gate_probs, assignments, c, num_experts, sequence_length):
        return torch.zeros((), dtype=gate_probs.dtype)


class TokenLevelAuxLoss(AuxLoss):
    @property
    def name(self) -> str:
        return "token_level"

    def __call__(self, gate_probs, assignments, c, num_experts, sequence_length):
        return aux_loss_token_level(gate_probs, assignments, c, num_experts)


class SequenceWiseAuxLoss(AuxLoss):
    @property
    def name(self) -> str:
        return "sequence_wise"

    def __call__(self, gate_probs, assignments, c, num_experts, sequence_length):
        return aux_loss_sequence_wise(gate_probs, assignments, c, num_experts, sequence_length)


AUX_LOSSES = {
    NoAuxLoss().name: NoAuxLoss,
    TokenLevelAuxLoss().name: TokenLevelAuxLoss,
    SequenceWiseAuxLoss().name: SequenceWiseAuxLoss,
}


def get_aux_loss(name: str) -> AuxLoss:
    if name not in AUX_LOSSES:
        raise ConfigError(f"Aux loss {name!r} not supported. Please choose from {list(AUX_LOSSES)}", key="aux_loss")
    return AUX_LOSSES[name]()
