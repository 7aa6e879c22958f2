# The MIT License (MIT)
# Copyright © 2024 The laep developers

# Permission is hereby granted, free of charge, to any person obtaining a copy of this software and associated
# documentation files (the “Software”), to deal in the Software without restriction, including without limitation
# the rights to use, copy, modify, merge, publish, distribute, sublicense, and/or sell copies of the Software,
# and to permit persons to whom the Software is furnished to do so, subject to the following conditions:

# The above copyright notice and this permission notice shall be included in all copies or substantial portions of
# the Software.

# THE SOFTWARE IS PROVIDED “AS IS”, WITHOUT WARRANTY OF ANY KIND, EXPRESS OR IMPLIED, INCLUDING BUT NOT LIMITED TO
# THE WARRANTIES OF MERCHANTABILITY, FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL
# THE AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER LIABILITY, WHETHER IN AN ACTION
# OF CONTRACT, TORT OR OTHERWISE, ARISING FROM, OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER
# DEALINGS IN THE SOFTWARE.

import os
import argparse
from types import SimpleNamespace
from typing import Any, Dict, Tuple
from loguru import logger

from laep.utils.exceptions import ConfigError

# Marks a key that must be present in a key-value file.
REQUIRED = object()


def load_kv_file(path: str, fields: Dict[str, Tuple[type, Any]]) -> Dict[str, Any]:
    """Parses a flat ``key = value`` file against a field schema.

    Args:
        path (str): File to read. Blank lines and lines starting with ``#`` are ignored.
        fields (Dict[str, Tuple[type, Any]]): Maps each accepted key to ``(type, default)``.
            A default of ``REQUIRED`` makes the key mandatory.
    Returns:
        Dict[str, Any]: Every schema key, converted to its type, defaults filled in.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"Config file {path!r} does not exist")

    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")

            key, value = (part.strip() for part in line.split("=", 1))
            if key not in fields:
                raise ConfigError(
                    f"{path}:{lineno}: unknown key {key!r}. Please choose from {sorted(fields)}",
                    key=key,
                )
            kind = fields[key][0]
            try:
                values[key] = _convert(value, kind)
            except ValueError:
                raise ConfigError(
                    f"{path}:{lineno}: key {key!r} expects {kind.__name__}, got {value!r}",
                    key=key,
                )

    for key, (_, default) in fields.items():
        if key in values:
            continue
        if default is REQUIRED:
            raise ConfigError(f"{path}: missing required key {key!r}", key=key)
        values[key] = default

    return values


def _convert(value: str, kind: type) -> Any:
    if kind is bool:
        lowered = value.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(value)
    if kind is float and value.lower() in ("inf", "+inf", "infinity"):
        return float("inf")
    return kind(value)


def add_args(parser):
    """
    Adds the arguments shared by every subcommand.
    """
    parser.add_argument(
        "--seed",
        type=int,
        help="Overrides the seed of the spec/config file.",
        default=None,
    )

    parser.add_argument(
        "--out",
        type=str,
        help="Output file or directory, depending on the command.",
        default=None,
    )

    parser.add_argument(
        "--structure",
        type=str,
        help="Model structure: a key-value file or a preset name (10b, 20b, 1515b, toy).",
        default=None,
    )

    parser.add_argument(
        "--top-k",
        dest="top_k",
        type=int,
        help="Experts per token of the trace. Taken from --structure when that is given.",
        default=None,
    )

    parser.add_argument(
        "--logging.debug",
        action="store_true",
        help="Turn on debug logging.",
        default=False,
    )

    parser.add_argument(
        "--logging.trace",
        action="store_true",
        help="Turn on trace logging.",
        default=False,
    )

    parser.add_argument(
        "--events.off",
        action="store_true",
        help="If set, we dont save events to a log file.",
        default=False,
    )

    parser.add_argument(
        "--events.retention_size",
        type=str,
        help="Events retention size.",
        default="2 GB",
    )


def add_gen_args(parser):
    """Add trace generation arguments to the parser."""
    parser.add_argument(
        "--spec",
        type=str,
        required=True,
        help="Key-value trace generation spec file.",
    )


def add_train_args(parser):
    """Add toy trainer arguments to the parser."""
    parser.add_argument(
        "--config",
        type=str,
        required=True,
        help="Key-value training config file.",
    )

    parser.add_argument(
        "--wandb.on",
        action="store_true",
        help="Enable wandb logging.",
        default=False,
    )

    parser.add_argument(
        "--wandb.offline",
        action="store_true",
        help="Runs wandb in offline mode.",
        default=False,
    )

    parser.add_argument(
        "--wandb.project_name",
        type=str,
        help="The name of the project where you are sending the new run.",
        default="laep-toy",
    )

    parser.add_argument(
        "--wandb.entity",
        type=str,
        help="Wandb entity to log to.",
        default=None,
    )

    parser.add_argument(
        "--wandb.notes",
        type=str,
        help="Notes to add to the wandb run.",
        default="",
    )


def add_prune_args(parser):
    """Add pruning arguments to the parser."""
    parser.add_argument("--trace", type=str, required=True, help="Trace CSV to prune.")

    parser.add_argument(
        "--alpha",
        type=float,
        help="Constant individual load constraint for every layer ('inf' allowed).",
        default=None,
    )

    parser.add_argument(
        "--alpha-edge",
        dest="alpha_edge",
        type=float,
        help="Alpha for the first and last sixth of the layers.",
        default=None,
    )

    parser.add_argument(
        "--alpha-mid",
        dest="alpha_mid",
        type=float,
        help="Alpha for the remaining middle layers.",
        default=None,
    )

    parser.add_argument(
        "--beta",
        type=float,
        help="Cumulative load constraint.",
        default=0.1,
    )

    parser.add_argument(
        "--stability",
        type=str,
        help="Stability rule: 'fixed:<iteration>' or 'rank:<rho>:<window>'.",
        default="fixed:0",
    )

    parser.add_argument(
        "--window",
        type=int,
        help="Number of stable iterations over which markers accumulate (0 = until the end).",
        default=0,
    )


def add_rearrange_args(parser):
    """Add rearrangement arguments to the parser."""
    parser.add_argument("--trace", type=str, required=True, help="Trace CSV.")
    parser.add_argument("--decision", type=str, required=True, help="Decision JSON.")
    parser.add_argument(
        "--groups", type=int, required=True, help="Number of device groups n_g."
    )
    parser.add_argument(
        "--period",
        type=int,
        help="Re-run the placement every k iterations instead of once.",
        default=None,
    )


def add_simulate_args(parser):
    """Add cluster simulation arguments to the parser."""
    parser.add_argument("--trace", type=str, required=True, help="Trace CSV.")
    parser.add_argument("--decision", type=str, required=True, help="Decision JSON.")
    parser.add_argument("--placement", type=str, required=True, help="Placement JSON.")
    parser.add_argument(
        "--expert-cost-ratio",
        dest="expert_cost_ratio",
        type=float,
        help="Opt-in per-resident-expert cost as a fraction of the mean expert load (0 = pure max-load proxy).",
        default=0.0,
    )
    parser.add_argument(
        "--extra-trace",
        dest="extra_trace",
        action="append",
        type=str,
        help="Further trace reported with all experts and base placement, as name=path. Repeatable.",
        default=None,
    )
    parser.add_argument(
        "--overhead",
        type=int,
        help="Fixed parameter overhead (embeddings etc.).",
        default=0,
    )


def add_report_args(parser):
    """Add report arguments to the parser."""
    parser.add_argument("--trace", type=str, required=True, help="Trace CSV.")
    parser.add_argument(
        "--window",
        type=int,
        help="Iterations in the stable histogram window (0 = last quarter of the trace).",
        default=0,
    )


def to_config(namespace: argparse.Namespace) -> SimpleNamespace:
    """Nests dotted argparse destinations, so ``wandb.on`` becomes ``config.wandb.on``."""
    config = SimpleNamespace()
    for key, value in sorted(vars(namespace).items()):
        node = config
        *parents, leaf = key.split(".")
        for parent in parents:
            if not hasattr(node, parent):
                setattr(node, parent, SimpleNamespace())
            node = getattr(node, parent)
        setattr(node, leaf, value)

    if not hasattr(config, "wandb"):
        config.wandb = SimpleNamespace(on=False)
    return config


def check_config(config: SimpleNamespace):
    r"""Checks/validates the config namespace object and resolves the output directory."""
    if config.out is None:
        raise ConfigError("--out is required", key="out")

    # Events log next to the output, never inside an output directory.
    config.full_path = os.path.dirname(os.path.abspath(os.path.expanduser(config.out)))
    os.makedirs(config.full_path, exist_ok=True)
    logger.debug(f"Output path: {config.full_path}")


def namespace_to_dict(config: SimpleNamespace) -> Dict[str, Any]:
    """Flattens a nested config back into dotted keys for manifests."""
    flat = {}
    for key, value in vars(config).items():
        if isinstance(value, SimpleNamespace):
            for sub_key, sub_value in namespace_to_dict(value).items():
                flat[f"{key}.{sub_key}"] = sub_value
        else:
            flat[key] = value
    return flat
