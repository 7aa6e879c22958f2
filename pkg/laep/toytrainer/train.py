import math
import numpy as np
import torch
from dataclasses import asdict, dataclass, replace
from loguru import logger
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

from laep.core import ExpertTokenCounts, ModelStructure, check_conservation, load_structure
from laep.toytrainer.aux_losses import AUX_LOSSES, get_aux_loss
from laep.toytrainer.model import ACTIVATIONS, DTYPE, ForwardPass, ToyMoEState, forward, init_state
from laep.toytrainer.task import SyntheticTask
from laep.utils.config import load_kv_file
from laep.utils.exceptions import (
    DimensionMismatchError,
    TrainingDivergedError,
    ValidationError,
)


@dataclass(frozen=True)
class TrainConfig:
    structure: ModelStructure
    aux_loss: str = "none"
    aux_coefficient: float = 0.0
    learning_rate: float = 0.1
    batch_tokens: int = 256
    sequence_length: int = 32
    num_iterations: int = 2000
    seed: int = 0
    activation: str = "tanh"
    init_scale: float = 1.0
    log_interval: int = 100

    def __post_init__(self):
        if self.aux_loss not in AUX_LOSSES:
            raise ValidationError(f"Aux loss {self.aux_loss!r} not supported. Please choose from {list(AUX_LOSSES)}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(
                f"Activation {self.activation!r} not supported. Please choose from {list(ACTIVATIONS)}"
            )
        if self.aux_coefficient < 0 or not math.isfinite(self.aux_coefficient):
            raise ValidationError(f"aux_coefficient must be a finite value >= 0, got {self.aux_coefficient}")
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_tokens < 1 or self.sequence_length < 1 or self.batch_tokens % self.sequence_length:
            raise ValidationError(
                f"sequence_length ({self.sequence_length}) must divide batch_tokens ({self.batch_tokens})"
            )
        if self.num_iterations < 1:
            raise ValidationError(f"num_iterations must be positive, got {self.num_iterations}")
        if self.init_scale <= 0 or self.log_interval < 1:
            raise ValidationError("init_scale must be > 0 and log_interval >= 1")

    @property
    def uses_aux_loss(self) -> bool:
        return self.aux_loss != "none" and self.aux_coefficient > 0

    def __state_dict__(self):
        state = asdict(self)
        state["structure"] = self.structure.__state_dict__()
        return state


class TrainResult(NamedTuple):
    state: ToyMoEState
    trace: ExpertTokenCounts
    loss_curve: np.ndarray
    task_curve: np.ndarray
    aux_curve: np.ndarray


def _streams(seed: int) -> List[np.random.SeedSequence]:
    """Independent streams for initialization, training batches and gradient probes."""
    return np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF).spawn(3)


def _batch(task: SyntheticTask, config: TrainConfig, rng: np.random.Generator) -> Tuple[torch.Tensor, torch.Tensor]:
    inputs, labels = task.sample(config.batch_tokens, config.sequence_length, rng)
    return torch.from_numpy(inputs).to(DTYPE), torch.from_numpy(labels).long()


def compute_loss(
    state: ToyMoEState, config: TrainConfig, inputs: torch.Tensor, labels: torch.Tensor
) -> Tuple[torch.Tensor, torch.Tensor, ForwardPass]:
    """Returns (task cross-entropy, auxiliary term summed over layers, forward pass)."""
    result = forward(state, inputs, config.structure.top_k, config.activation)
    task_loss = torch.nn.functional.cross_entropy(result.logits, labels)

    aux = torch.zeros((), dtype=DTYPE)
    if config.uses_aux_loss:
        aux_fn = get_aux_loss(config.aux_loss)
        for probs, chosen in zip(result.gate_probs, result.assignments):
            aux = aux + aux_fn(
                probs, chosen, config.aux_coefficient, state.num_experts, config.sequence_length
            )
    return task_loss, aux, result


def _check_compatible(state: ToyMoEState, config: TrainConfig, task: SyntheticTask):
    structure = config.structure
    if task.hidden_size != structure.hidden_size:
        raise DimensionMismatchError(
            f"task inputs have width {task.hidden_size}, structure hidden_size is {structure.hidden_size}"
        )
    if state is None:
        return
    shape = (state.num_layers, state.num_experts, state.router_weights.shape[1], state.expert_up.shape[-1])
    expected = (structure.num_layers, structure.experts_per_layer, structure.hidden_size, structure.ffn_hidden_size)
    if shape != expected or state.output_head.shape[1] != task.num_classes:
        raise DimensionMismatchError(f"initial state {shape} does not match structure {expected} and task")


def _gradients(total: torch.Tensor, params: List[torch.Tensor]) -> List[torch.Tensor]:
    grads = torch.autograd.grad(total, params, allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]


def train(
    config: TrainConfig,
    task: SyntheticTask,
    initial_state: ToyMoEState = None,
    on_log: Optional[Callable[[int, Dict], None]] = None,
) -> TrainResult:
    """Trains the toy MoE with plain SGD and records the per-iteration routing trace.

    Args:
        config (TrainConfig): Structure, aux loss, optimizer and seed settings.
        task (SyntheticTask): Data source.
        initial_state (ToyMoEState, optional): Continue from this state (for example
            one returned by ``apply_decision``) instead of a fresh initialization.
        on_log (Callable, optional): Called every ``log_interval`` iterations with
            the iteration index and a dict of losses.
    Returns:
        TrainResult: final state, trace, total loss per iteration and its two parts.
    """
    _check_compatible(initial_state, config, task)
    structure = config.structure
    init_stream, data_stream, _ = _streams(config.seed)

    if initial_state is None:
        initial_state = init_state(structure, task.num_classes, np.random.default_rng(init_stream), config.init_scale)
    state = initial_state.clone(requires_grad=True)
    params = state.parameters()
    data_rng = np.random.default_rng(data_stream)

    counts = np.zeros((config.num_iterations, structure.num_layers, structure.experts_per_layer), dtype=np.int64)
    task_curve = np.zeros(config.num_iterations)
    aux_curve = np.zeros(config.num_iterations)

    for iteration in range(config.num_iterations):
        inputs, labels = _batch(task, config, data_rng)
        try:
            task_loss, aux, result = compute_loss(state, config, inputs, labels)
        except ValidationError:
            raise TrainingDivergedError(iteration, float("nan"))
        total = task_loss + aux
        if not torch.isfinite(total):
            raise TrainingDivergedError(iteration, float(total))

        for layer, chosen in enumerate(result.assignments):
            counts[iteration, layer] = np.bincount(chosen.reshape(-1).numpy(), minlength=structure.experts_per_layer)
        task_curve[iteration] = float(task_loss)
        aux_curve[iteration] = float(aux)

        grads = _gradients(total, params)
        with torch.no_grad():
            for p, g in zip(params, grads):
                p -= config.learning_rate * g

        if (iteration + 1) % config.log_interval == 0 or iteration + 1 == config.num_iterations:
            logs = {
                "iteration": iteration,
                "task_loss": task_curve[iteration],
                "aux_loss": aux_curve[iteration],
                "total_loss": float(total),
            }
            logger.info(
                f"Iteration {iteration + 1}/{config.num_iterations}: task={logs['task_loss']:.4f} "
                f"aux={logs['aux_loss']:.6f}"
            )
            if on_log is not None:
                on_log(iteration, logs)

    trace = ExpertTokenCounts(counts=counts, tokens_per_iter=config.batch_tokens, top_k=structure.top_k)
    check_conservation(trace)
    return TrainResult(
        state=state.clone(requires_grad=False),
        trace=trace,
        loss_curve=task_curve + aux_curve,
        task_curve=task_curve,
        aux_curve=aux_curve,
    )


def grad_check(
    state: ToyMoEState,
    config: TrainConfig,
    task: SyntheticTask,
    num_probes: int,
    step: float = 1e-4,
    floor: float = 1e-5,
    transform_grad: Callable[[torch.Tensor], torch.Tensor] = None,
) -> float:
    """Max relative error between autograd and central differences at random parameters.

    The numeric gradient Richardson-extrapolates central differences at ``step`` and
    ``step / 2``, which cancels the leading truncation term. The relative error of a
    probe is ``|a - n| / max(|a|, |n|)``; probes where both gradients are below
    ``floor`` count as exact. A probe whose perturbation changes any top-k routing
    decision is redrawn, since the loss jumps there.

    Args:
        transform_grad (Callable, optional): Applied to each analytic gradient first;
            lets tests corrupt the gradient on purpose.
    """
    if num_probes < 1:
        raise ValidationError(f"num_probes must be >= 1, got {num_probes}")
    _check_compatible(state, config, task)
    probe_rng = np.random.default_rng(_streams(config.seed)[2])
    inputs, labels = _batch(task, config, probe_rng)

    live = state.clone(requires_grad=True)
    task_loss, aux, reference = compute_loss(live, config, inputs, labels)
    grads = _gradients(task_loss + aux, live.parameters())
    if transform_grad is not None:
        grads = [transform_grad(g) for g in grads]

    work = state.clone(requires_grad=False)
    params = [p.view(-1) for p in work.parameters()]
    sizes = np.array([p.numel() for p in params], dtype=np.float64)

    def evaluate() -> Tuple[float, bool]:
        with torch.no_grad():
            t, a, result = compute_loss(work, config, inputs, labels)
        same = all(torch.equal(x, y) for x, y in zip(result.assignments, reference.assignments))
        return float(t + a), same

    worst, done, redraws = 0.0, 0, 0
    while done < num_probes:
        which = int(probe_rng.choice(len(params), p=sizes / sizes.sum()))
        flat = int(probe_rng.integers(params[which].numel()))
        original = params[which][flat].item()

        values, unchanged = [], True
        for offset in (step, -step, step / 2, -step / 2):
            params[which][flat] = original + offset
            value, same = evaluate()
            values.append(value)
            unchanged = unchanged and same
        params[which][flat] = original

        if not unchanged:
            redraws += 1
            if redraws > 10 * num_probes:
                logger.warning(f"Gave up after {redraws} redrawn probes; {done} probes evaluated")
                break
            continue

        analytic = grads[which].reshape(-1)[flat].item()
        plus, minus, half_plus, half_minus = values
        numeric = (8 * (half_plus - half_minus) - (plus - minus)) / (6 * step)
        scale = max(abs(analytic), abs(numeric))
        if scale >= floor:
            worst = max(worst, abs(analytic - numeric) / scale)
        done += 1

    if redraws:
        logger.warning(f"Redrew {redraws} probes whose perturbation changed the routing")
    logger.info(f"Gradient check over {done} probes: max relative error {worst:.3e}")
    return worst


TRAIN_CONFIG_FIELDS = {
    "structure": (str, "toy"),
    "layers": (int, None),
    "experts": (int, None),
    "top_k": (int, None),
    "hidden_size": (int, None),
    "ffn_hidden_size": (int, None),
    "aux_loss": (str, "none"),
    "aux_coefficient": (float, 0.0),
    "learning_rate": (float, 0.1),
    "batch_tokens": (int, 256),
    "sequence_length": (int, 32),
    "iterations": (int, 2000),
    "seed": (int, 0),
    "activation": (str, "tanh"),
    "init_scale": (float, 1.0),
    "log_interval": (int, 100),
    "num_classes": (int, 16),
    "noise_scale": (float, 0.5),
    "class_skew": (float, 1.0),
    "sequence_focus": (float, 0.5),
    "task_seed": (int, None),
}

_STRUCTURE_OVERRIDES = {
    "layers": "num_layers",
    "experts": "experts_per_layer",
    "top_k": "top_k",
    "hidden_size": "hidden_size",
    "ffn_hidden_size": "ffn_hidden_size",
}


def load_train_config(path: str, seed: int = None, structure: str = None) -> Tuple[TrainConfig, SyntheticTask]:
    """Reads a flat key-value train config; ``seed`` and ``structure`` override the file.

    ``structure`` names a preset (default ``toy``) or a structure file; the
    ``layers``, ``experts``, ``top_k``, ``hidden_size`` and ``ffn_hidden_size`` keys
    override single fields of it. ``task_seed`` defaults to the training seed.
    """
    values = load_kv_file(path, TRAIN_CONFIG_FIELDS)
    seed = values["seed"] if seed is None else seed

    overrides = {field: values[key] for key, field in _STRUCTURE_OVERRIDES.items() if values[key] is not None}
    structure = replace(load_structure(structure or values["structure"]), **overrides)

    config = TrainConfig(
        structure=structure,
        aux_loss=values["aux_loss"],
        aux_coefficient=values["aux_coefficient"],
        learning_rate=values["learning_rate"],
        batch_tokens=values["batch_tokens"],
        sequence_length=values["sequence_length"],
        num_iterations=values["iterations"],
        seed=seed,
        activation=values["activation"],
        init_scale=values["init_scale"],
        log_interval=values["log_interval"],
    )
    task = SyntheticTask(
        num_classes=values["num_classes"],
        hidden_size=structure.hidden_size,
        noise_scale=values["noise_scale"],
        seed=seed if values["task_seed"] is None else values["task_seed"],
        class_skew=values["class_skew"],
        sequence_focus=values["sequence_focus"],
    )
    return config, task
