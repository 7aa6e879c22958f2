import os
import csv
import numpy as np
from types import SimpleNamespace
from loguru import logger

from laep.cli.manifest import RunManifest
from laep.clustersim import SCENARIOS, compare_scenarios, count_params, write_report
from laep.core import load_stats, load_structure, validate_trace, window_aggregate
from laep.pruning import (
    FixedIteration,
    PruneConfig,
    alpha_schedule_constant,
    alpha_schedule_hybrid,
    parse_stability,
    prune,
    read_decision,
    write_decision,
)
from laep.rearrange import (
    LayerPlacement,
    balance_metrics,
    contiguous_baseline,
    place_layer,
    read_placement,
    rearrange_periodic,
    write_placement,
)
from laep.toytrainer import load_train_config, save_state, train, write_loss_curve
from laep.tracegen import generate, load_gen_spec, read_trace, write_trace
from laep.utils.config import namespace_to_dict
from laep.utils.exceptions import ConfigError, DimensionMismatchError
from laep.utils.logging import init_wandb, log_event


def _flags(config: SimpleNamespace) -> dict:
    flags = namespace_to_dict(config)
    flags.pop("full_path", None)
    return flags


def _structure(config: SimpleNamespace, required: bool = False):
    if config.structure is None:
        if required:
            raise ConfigError("this command needs --structure", key="structure")
        return None
    return load_structure(config.structure)


def _top_k(config: SimpleNamespace, structure=None, required: bool = False) -> int:
    top_k = getattr(config, "top_k", None)
    if structure is not None:
        if top_k is not None and top_k != structure.top_k:
            raise ConfigError(f"--top-k {top_k} disagrees with the structure's top_k {structure.top_k}", key="top_k")
        return structure.top_k
    if top_k is None:
        if required:
            raise ConfigError("this command needs --top-k or --structure to know the trace's top_k", key="top_k")
        return 1
    return top_k


def _read_trace(config: SimpleNamespace, structure=None, path: str = None, top_k_required: bool = False):
    trace = read_trace(path or config.trace, top_k=_top_k(config, structure, top_k_required))
    if structure is not None:
        validate_trace(trace, structure)
    return trace


def _extra_traces(config: SimpleNamespace, structure) -> dict:
    traces = {}
    for item in config.extra_trace or []:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise ConfigError(f"--extra-trace expects name=path, got {item!r}", key="extra_trace")
        if name in traces or name in SCENARIOS:
            raise ConfigError(f"duplicate scenario name {name!r}", key="extra_trace")
        traces[name] = (path, _read_trace(config, structure, path=path))
    return traces


def _check_decision(decision, trace):
    if decision.num_layers != trace.num_layers:
        raise DimensionMismatchError(
            f"decision covers {decision.num_layers} layers but the trace has {trace.num_layers}"
        )
    for layer in decision.layers:
        if layer.num_experts != trace.num_experts:
            raise DimensionMismatchError(
                f"decision layer {layer.layer} covers {layer.num_experts} experts, trace has {trace.num_experts}"
            )


def cmd_gen(config: SimpleNamespace):
    spec = load_gen_spec(config.spec, seed=config.seed)
    trace = generate(spec)
    validate_trace(trace, spec.structure)
    write_trace(trace, config.out)

    RunManifest(
        command="gen",
        config={**_flags(config), "spec": spec.__state_dict__()},
        inputs={"spec": config.spec},
        outputs={"trace": config.out},
        seed=spec.seed,
    ).write(config.out + ".manifest.json")
    log_event(config, {"stage": "gen", "iterations": trace.num_iterations, "layers": trace.num_layers})
    logger.success(f"Wrote {trace!r} to {config.out}")


def cmd_train(config: SimpleNamespace):
    train_config, task = load_train_config(config.config, seed=config.seed, structure=config.structure)
    resolved = {**_flags(config), "train": train_config.__state_dict__(), "task": task.__state_dict__()}

    run = init_wandb(config, resolved) if config.wandb.on else None

    def on_log(iteration, logs):
        log_event(config, {"stage": "train", **logs}, run)

    try:
        result = train(train_config, task, on_log=on_log)
    finally:
        if run is not None:
            run.finish()

    os.makedirs(config.out, exist_ok=True)
    outputs = {
        "trace": os.path.join(config.out, "trace.csv"),
        "loss": os.path.join(config.out, "loss.csv"),
        "state": os.path.join(config.out, "state.pt"),
    }
    write_trace(result.trace, outputs["trace"])
    write_loss_curve(result, outputs["loss"])
    save_state(result.state, outputs["state"])

    RunManifest(
        command="train",
        config=resolved,
        inputs={"config": config.config},
        outputs=outputs,
        seed=train_config.seed,
    ).write(os.path.join(config.out, "manifest.json"))
    logger.success(f"Trained {train_config.num_iterations} iterations, final loss {result.loss_curve[-1]:.4f}")


def _alpha_schedule(config: SimpleNamespace, num_layers: int):
    hybrid = (config.alpha_edge, config.alpha_mid)
    if config.alpha is not None and any(a is not None for a in hybrid):
        raise ConfigError("--alpha conflicts with --alpha-edge/--alpha-mid; give one or the other", key="alpha")
    if config.alpha is not None:
        return alpha_schedule_constant(num_layers, config.alpha)
    if all(a is not None for a in hybrid):
        return alpha_schedule_hybrid(num_layers, *hybrid)
    raise ConfigError("give either --alpha or both --alpha-edge and --alpha-mid", key="alpha")


def cmd_prune(config: SimpleNamespace):
    structure = _structure(config)
    trace = _read_trace(config, structure, top_k_required=True)
    schedule = _alpha_schedule(config, trace.num_layers)
    prune_config = PruneConfig(
        alpha_schedule=schedule,
        beta=config.beta,
        stability=parse_stability(config.stability),
        marker_window=config.window,
    )

    decision = prune(trace, prune_config)
    write_decision(decision, config.out)

    print("layer,pruned,survivors")
    for layer in decision.layers:
        print(f"{layer.layer},{len(layer.pruned)},{len(layer.survivors)}")
    if structure is not None:
        before = count_params(structure, [trace.num_experts] * trace.num_layers)
        after = count_params(structure, decision.experts_per_layer())
        print(f"total_params_before={before}")
        print(f"total_params_after={after}")

    RunManifest(
        command="prune",
        config={**_flags(config), "prune": prune_config.__state_dict__()},
        inputs={"trace": config.trace},
        outputs={"decision": config.out},
        seed=config.seed,
    ).write(config.out + ".manifest.json")
    log_event(config, {"stage": "prune", "pruned": decision.num_pruned, "window": list(decision.window)})
    logger.success(f"Pruned {decision.num_pruned} experts, decision written to {config.out}")


def cmd_rearrange(config: SimpleNamespace):
    trace = _read_trace(config, _structure(config))
    decision = read_decision(config.decision)
    _check_decision(decision, trace)
    begin, end = decision.window or (0, trace.num_iterations)

    placements = []
    for layer in range(trace.num_layers):
        survivors = decision.survivors(layer)
        if config.period:
            placements.extend(rearrange_periodic(trace, layer, survivors, config.groups, config.period, begin, end))
            continue
        assignment = place_layer(trace, layer, survivors, config.groups, begin, end)
        baseline = contiguous_baseline(window_aggregate(trace, layer, begin, end).loads[survivors], config.groups, survivors)
        logger.debug(
            f"Layer {layer}: imbalance {balance_metrics(baseline).imbalance_ratio:.4f} -> "
            f"{balance_metrics(assignment).imbalance_ratio:.4f}"
        )
        placements.append(LayerPlacement(layer=layer, assignment=assignment))

    write_placement(placements, config.out)
    RunManifest(
        command="rearrange",
        config=_flags(config),
        inputs={"trace": config.trace, "decision": config.decision},
        outputs={"placement": config.out},
        seed=config.seed,
    ).write(config.out + ".manifest.json")
    log_event(config, {"stage": "rearrange", "placements": len(placements), "groups": config.groups})
    logger.success(f"Wrote {len(placements)} placements to {config.out}")


def cmd_simulate(config: SimpleNamespace):
    structure = _structure(config, required=True)
    trace = _read_trace(config, structure)
    decision = read_decision(config.decision)
    _check_decision(decision, trace)
    placements = read_placement(config.placement)

    by_layer = [[p for p in placements if p.layer == layer] for layer in range(trace.num_layers)]
    missing = [layer for layer, entries in enumerate(by_layer) if not entries]
    if missing:
        raise DimensionMismatchError(f"placement has no entry for layers {missing}")
    num_groups = placements[0].assignment.num_groups

    prune_config = PruneConfig(
        alpha_schedule=decision.alpha or [float("inf")] * trace.num_layers,
        beta=1.0 if decision.beta is None else decision.beta,
        stability=FixedIteration(decision.stable_iteration or 0),
    )
    extras = _extra_traces(config, structure)
    reports = compare_scenarios(
        trace,
        structure,
        prune_config,
        num_groups,
        decision=decision,
        placements=by_layer,
        expert_cost_ratio=config.expert_cost_ratio,
        overhead=config.overhead,
        extra_traces={name: other for name, (_, other) in extras.items()},
    )
    csv_path = write_report(reports, config.out)

    RunManifest(
        command="simulate",
        config=_flags(config),
        inputs={
            "trace": config.trace,
            "decision": config.decision,
            "placement": config.placement,
            **{f"extra_trace.{name}": path for name, (path, _) in extras.items()},
        },
        outputs={"report": config.out, "csv": csv_path},
        seed=config.seed,
    ).write(config.out + ".manifest.json")
    log_event(
        config,
        {"stage": "simulate", **{r.scenario: r.relative_throughput for r in reports}},
    )
    logger.success(f"Wrote {len(reports)} scenario reports to {config.out}")


def _ratio(value: float) -> str:
    return "inf" if np.isinf(value) else repr(value)


def cmd_report(config: SimpleNamespace):
    trace = _read_trace(config, _structure(config))
    os.makedirs(config.out, exist_ok=True)
    window = config.window or max(1, trace.num_iterations // 4)
    window = min(window, trace.num_iterations)
    begin, end = trace.num_iterations - window, trace.num_iterations

    outputs = {}
    for layer in range(trace.num_layers):
        path = os.path.join(config.out, f"layer_{layer}_evolution.csv")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["iter", "expert", "tokens"])
            for it in range(trace.num_iterations):
                writer.writerows((it, e, int(t)) for e, t in enumerate(trace.counts[it, layer]))
        outputs[f"layer_{layer}_evolution"] = path

        snapshot = window_aggregate(trace, layer, begin, end)
        stats = load_stats(snapshot)
        path = os.path.join(config.out, f"layer_{layer}_stable_hist.csv")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["expert", "tokens", "mean", "max_min_ratio"])
            writer.writerows(
                (e, int(t), repr(stats.mean), _ratio(stats.max_min_ratio)) for e, t in enumerate(snapshot.loads)
            )
        outputs[f"layer_{layer}_stable_hist"] = path

    path = os.path.join(config.out, "windows.csv")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(
            ["layer", "iter_begin", "iter_end", "mean", "coefficient_of_variation", "max_min_ratio", "spearman"]
        )
        for layer in range(trace.num_layers):
            previous = None
            for start in range(0, trace.num_iterations - window + 1, window):
                snapshot = window_aggregate(trace, layer, start, start + window)
                stats = load_stats(snapshot, previous)
                rho = "" if stats.spearman_vs_previous is None else repr(stats.spearman_vs_previous)
                writer.writerow(
                    [
                        layer,
                        start,
                        start + window,
                        repr(stats.mean),
                        repr(stats.coefficient_of_variation),
                        _ratio(stats.max_min_ratio),
                        rho,
                    ]
                )
                previous = snapshot
    outputs["windows"] = path

    RunManifest(
        command="report",
        config={**_flags(config), "stable_window": [begin, end]},
        inputs={"trace": config.trace},
        outputs=outputs,
        seed=config.seed,
    ).write(os.path.join(config.out, "manifest.json"))
    log_event(config, {"stage": "report", "layers": trace.num_layers, "window": window})
    logger.success(f"Wrote report for {trace.num_layers} layers to {config.out}")


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "prune": cmd_prune,
    "rearrange": cmd_rearrange,
    "simulate": cmd_simulate,
    "report": cmd_report,
}
