import os
from typing import Dict

from laep.core.types import ModelStructure
from laep.utils.config import load_kv_file, REQUIRED
from laep.utils.exceptions import ConfigError

STRUCTURES: Dict[str, ModelStructure] = {
    "10b": ModelStructure(
        num_layers=12,
        experts_per_layer=64,
        top_k=2,
        hidden_size=1024,
        ffn_hidden_size=4096,
        num_attention_heads=4,
        attention_hidden_size=256,
    ),
    "20b": ModelStructure(
        num_layers=48,
        experts_per_layer=64,
        top_k=2,
        hidden_size=1024,
        ffn_hidden_size=2048,
        num_attention_heads=4,
        attention_hidden_size=256,
    ),
    "1515b": ModelStructure(
        num_layers=103,
        experts_per_layer=64,
        top_k=2,
        hidden_size=4608,
        ffn_hidden_size=16384,
        num_attention_heads=36,
        attention_hidden_size=256,
    ),
    # Desk-scale model the toy trainer defaults to.
    "toy": ModelStructure(
        num_layers=4,
        experts_per_layer=16,
        top_k=2,
        hidden_size=16,
        ffn_hidden_size=32,
        num_attention_heads=1,
        attention_hidden_size=16,
    ),
}

STRUCTURE_FIELDS = {
    "layers": (int, REQUIRED),
    "experts": (int, REQUIRED),
    "top_k": (int, REQUIRED),
    "hidden_size": (int, REQUIRED),
    "ffn_hidden_size": (int, REQUIRED),
    "num_attention_heads": (int, 1),
    "attention_hidden_size": (int, 1),
}


def structure_from_dict(values: Dict) -> ModelStructure:
    return ModelStructure(
        num_layers=values["layers"],
        experts_per_layer=values["experts"],
        top_k=values["top_k"],
        hidden_size=values["hidden_size"],
        ffn_hidden_size=values["ffn_hidden_size"],
        num_attention_heads=values["num_attention_heads"],
        attention_hidden_size=values["attention_hidden_size"],
    )


def load_structure(name_or_path: str) -> ModelStructure:
    """Resolves ``--structure``: a preset name from ``STRUCTURES`` or a key-value file."""
    if name_or_path in STRUCTURES:
        return STRUCTURES[name_or_path]
    if not os.path.isfile(name_or_path):
        raise ConfigError(
            f"Structure {name_or_path!r} is neither a file nor a preset. Please choose from {list(STRUCTURES)}",
            key="structure",
        )
    return structure_from_dict(load_kv_file(name_or_path, STRUCTURE_FIELDS))
