import os
import sys
import copy
import wandb
from typing import Dict, Optional
from types import SimpleNamespace
from loguru import logger

import laep

EVENTS_LEVEL = "EVENTS"


def setup_logging(config: SimpleNamespace):
    """Configures the stderr sink and, unless disabled, the structured events sink."""
    level = "INFO"
    if config.logging.trace:
        level = "TRACE"
    elif config.logging.debug:
        level = "DEBUG"

    logger.remove()
    logger.add(sys.stderr, level=level)

    if EVENTS_LEVEL not in logger._core.levels:
        logger.level(EVENTS_LEVEL, no=38, icon="📝")

    if not config.events.off and config.full_path:
        os.makedirs(config.full_path, exist_ok=True)
        logger.add(
            os.path.join(config.full_path, "events.log"),
            rotation=config.events.retention_size,
            serialize=True,
            enqueue=False,
            backtrace=False,
            diagnose=False,
            level=EVENTS_LEVEL,
            format="{time:YYYY-MM-DD at HH:mm:ss} | {level} | {message}",
        )


def init_wandb(config: SimpleNamespace, run_config: Dict, reinit: bool = False):
    """Starts a new wandb run for a training command."""
    tags = [laep.__version__, str(laep.__spec_version__), config.command]

    run = wandb.init(
        anonymous="allow",
        reinit=reinit,
        project=config.wandb.project_name,
        entity=config.wandb.entity,
        config=copy.deepcopy(run_config),
        mode="offline" if config.wandb.offline else "online",
        dir=config.full_path,
        tags=tags,
        notes=config.wandb.notes,
    )
    logger.success(f"Started a new wandb run {run.name}")
    return run


def log_event(config: Optional[SimpleNamespace], event: Dict, run=None):
    """Logs a structured event to the events sink and, if a wandb run is active, to wandb."""
    if config is not None and not config.events.off:
        logger.log(EVENTS_LEVEL, "events", **event)

    if run is not None:
        run.log(event)
