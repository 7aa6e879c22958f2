import numpy as np
import torch
from dataclasses import dataclass, fields
from typing import Callable, Dict, List, NamedTuple, Tuple

from laep.core import ModelStructure
from laep.utils.exceptions import DimensionMismatchError, ValidationError

DTYPE = torch.float64

ACTIVATIONS: Dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "tanh": torch.tanh,
    "relu": torch.relu,
    "gelu": torch.nn.functional.gelu,
    "identity": lambda x: x,
}


@dataclass
class ToyMoEState:
    """Parameters of the toy MoE: an input projection, L MoE layers and a classifier head.

    ``router_mask[l, e]`` is True for pruned experts, whose gate logits are set to
    -inf before the softmax.
    """

    input_projection: torch.Tensor  # [hidden, hidden]
    router_weights: torch.Tensor  # [L, hidden, N]
    expert_up: torch.Tensor  # [L, N, hidden, ffn]
    expert_down: torch.Tensor  # [L, N, ffn, hidden]
    output_head: torch.Tensor  # [hidden, classes]
    router_mask: torch.Tensor  # [L, N] bool

    PARAMETERS = ("input_projection", "router_weights", "expert_up", "expert_down", "output_head")

    def __post_init__(self):
        L, h, N = self.router_weights.shape
        expected = {
            "input_projection": (h, h),
            "expert_up": (L, N, h, self.expert_up.shape[-1]),
            "expert_down": (L, N, self.expert_up.shape[-1], h),
            "output_head": (h, self.output_head.shape[-1]),
            "router_mask": (L, N),
        }
        for name, shape in expected.items():
            if tuple(getattr(self, name).shape) != shape:
                raise DimensionMismatchError(f"{name} has shape {tuple(getattr(self, name).shape)}, expected {shape}")
        for name in self.PARAMETERS:
            if not torch.isfinite(getattr(self, name)).all():
                raise ValidationError(f"{name} contains non-finite values")
        if self.router_mask.all(dim=1).any():
            raise ValidationError("every layer needs at least one unmasked expert")

    @property
    def num_layers(self) -> int:
        return self.router_weights.shape[0]

    @property
    def num_experts(self) -> int:
        return self.router_weights.shape[2]

    def parameters(self) -> List[torch.Tensor]:
        return [getattr(self, name) for name in self.PARAMETERS]

    def clone(self, requires_grad: bool = False) -> "ToyMoEState":
        copies = {f.name: getattr(self, f.name).detach().clone() for f in fields(self)}
        for name in self.PARAMETERS:
            copies[name].requires_grad_(requires_grad)
        return ToyMoEState(**copies)

    def state_dict(self) -> Dict[str, torch.Tensor]:
        return {f.name: getattr(self, f.name).detach().clone() for f in fields(self)}

    @classmethod
    def from_state_dict(cls, state: Dict[str, torch.Tensor]) -> "ToyMoEState":
        return cls(**{f.name: state[f.name] for f in fields(cls)})


def init_state(structure: ModelStructure, num_classes: int, rng: np.random.Generator, init_scale: float = 1.0) -> ToyMoEState:
    """Gaussian initialization scaled by fan-in; the router is additionally scaled by ``init_scale``."""
    L, N = structure.num_layers, structure.experts_per_layer
    h, f = structure.hidden_size, structure.ffn_hidden_size

    def normal(shape, std):
        return torch.from_numpy(rng.standard_normal(shape) * std).to(DTYPE)

    return ToyMoEState(
        input_projection=normal((h, h), 1 / np.sqrt(h)),
        router_weights=normal((L, h, N), init_scale / np.sqrt(h)),
        expert_up=normal((L, N, h, f), 1 / np.sqrt(h)),
        expert_down=normal((L, N, f, h), 1 / np.sqrt(f)),
        output_head=normal((h, num_classes), 1 / np.sqrt(h)),
        router_mask=torch.zeros((L, N), dtype=torch.bool),
    )


def route(
    hidden_states: torch.Tensor, router_weights: torch.Tensor, top_k: int, mask: torch.Tensor = None
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Softmax gating with top-k selection.

    Args:
        hidden_states (torch.Tensor): ``[S, hidden]`` token states.
        router_weights (torch.Tensor): ``[hidden, N]`` router matrix.
        top_k (int): Experts per token.
        mask (torch.Tensor, optional): ``[N]`` bool, True for experts that must not be chosen.
    Returns:
        assignments (torch.Tensor): ``[S, top_k]`` expert indices, highest gate first,
            ties to the lower index.
        gate_probs (torch.Tensor): ``[S, N]`` softmax over experts.
    """
    if hidden_states.shape[-1] != router_weights.shape[0]:
        raise DimensionMismatchError(
            f"hidden states of width {hidden_states.shape[-1]} do not match router {tuple(router_weights.shape)}"
        )
    logits = hidden_states @ router_weights
    if not torch.isfinite(logits).all():
        raise ValidationError("router produced non-finite logits")

    available = router_weights.shape[1]
    if mask is not None:
        logits = logits.masked_fill(mask, float("-inf"))
        available -= int(mask.sum())
    if not 1 <= top_k <= available:
        raise ValidationError(f"top_k={top_k} but only {available} experts can be routed to")

    gate_probs = torch.softmax(logits, dim=-1)
    order = torch.sort(gate_probs.detach(), dim=-1, descending=True, stable=True).indices
    return order[:, :top_k], gate_probs


class ForwardPass(NamedTuple):
    logits: torch.Tensor
    gate_probs: List[torch.Tensor]
    assignments: List[torch.Tensor]


def forward(state: ToyMoEState, inputs: torch.Tensor, top_k: int, activation: str = "tanh") -> ForwardPass:
    """Runs the model; each MoE layer adds its renormalized top-k mixture to the residual stream."""
    act = ACTIVATIONS[activation]
    z = inputs @ state.input_projection
    gate_probs, assignments = [], []
    for layer in range(state.num_layers):
        chosen, probs = route(z, state.router_weights[layer], top_k, state.router_mask[layer])
        gates = probs.gather(1, chosen)
        gates = gates / gates.sum(dim=1, keepdim=True)
        combine = torch.zeros_like(probs).scatter(1, chosen, gates)

        hidden = act(torch.einsum("sh,nhf->nsf", z, state.expert_up[layer]))
        outputs = torch.einsum("nsf,nfh->nsh", hidden, state.expert_down[layer])
        z = z + torch.einsum("sn,nsh->sh", combine, outputs)

        gate_probs.append(probs)
        assignments.append(chosen)
    return ForwardPass(z @ state.output_head, gate_probs, assignments)


def apply_decision(state: ToyMoEState, decision) -> ToyMoEState:
    """Returns a copy of ``state`` whose routers ignore the experts pruned by ``decision``."""
    if decision.num_layers != state.num_layers:
        raise DimensionMismatchError(f"decision has {decision.num_layers} layers, model has {state.num_layers}")
    pruned = state.clone()
    for layer in decision.layers:
        if layer.num_experts != state.num_experts:
            raise DimensionMismatchError(
                f"layer {layer.layer}: decision covers {layer.num_experts} experts, model has {state.num_experts}"
            )
        pruned.router_mask[layer.layer, list(layer.pruned)] = True
    return ToyMoEState.from_state_dict(pruned.state_dict())


def save_state(state: ToyMoEState, path: str):
    torch.save(state.state_dict(), path)


def load_state(path: str) -> ToyMoEState:
    return ToyMoEState.from_state_dict(torch.load(path))
