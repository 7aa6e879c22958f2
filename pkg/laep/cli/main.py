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

import argparse
from typing import List, Optional
from loguru import logger

import laep
from laep.cli.commands import COMMANDS
from laep.utils.config import (
    add_args,
    add_gen_args,
    add_prune_args,
    add_rearrange_args,
    add_report_args,
    add_simulate_args,
    add_train_args,
    check_config,
    to_config,
)
from laep.utils.exceptions import LAEPError
from laep.utils.logging import setup_logging

SUBCOMMANDS = {
    "gen": ("Generate a synthetic routing trace.", add_gen_args),
    "train": ("Train the toy MoE and record its routing trace.", add_train_args),
    "prune": ("Decide which experts to prune per layer.", add_prune_args),
    "rearrange": ("Place surviving experts into balanced device groups.", add_rearrange_args),
    "simulate": ("Compare parameter counts and step-time proxies across scenarios.", add_simulate_args),
    "report": ("Write per-layer load evolution and histogram CSVs.", add_report_args),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    add_args(common)

    parser = argparse.ArgumentParser(prog="laep", description="Layer-adaptive expert pruning toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {laep.__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (help_text, add_command_args) in SUBCOMMANDS.items():
        subparser = subparsers.add_parser(name, parents=[common], help=help_text)
        add_command_args(subparser)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Runs one subcommand; returns 0 on success, 2 on usage or validation errors, 3 otherwise."""
    try:
        namespace = build_parser().parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0

    config = to_config(namespace)
    try:
        check_config(config)
        setup_logging(config)
        COMMANDS[config.command](config)
    except LAEPError as e:
        logger.error(e.message)
        return e.exit_code
    except FileNotFoundError as e:
        logger.error(f"File not found: {e.filename}")
        return 2
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return 3
    return 0
