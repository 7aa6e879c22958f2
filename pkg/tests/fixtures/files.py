GEN_SPEC = {
    "layers": 2,
    "experts": 8,
    "top_k": 2,
    "iterations": 40,
    "tokens_per_iter": 128,
    "distribution": "zipf",
    "seed": 3,
}

TRAIN_CONFIG = {
    "structure": "toy",
    "iterations": 30,
    "batch_tokens": 64,
    "sequence_length": 16,
    "log_interval": 10,
    "seed": 5,
}

STRUCTURE_FILE = {
    "layers": 1,
    "experts": 4,
    "top_k": 1,
    "hidden_size": 8,
    "ffn_hidden_size": 16,
}


def write_kv(path, values: dict, skip=()):
    lines = ["# written by the test suite"]
    lines += [f"{key} = {value}" for key, value in values.items() if key not in skip]
    path.write_text("\n".join(lines) + "\n")
    return str(path)
