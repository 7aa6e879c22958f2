import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict

import laep


def _jsonable(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class RunManifest:
    """Everything needed to rerun a command: resolved configuration, paths, seed, version.

    Written with sorted keys and no timestamps, so identical runs give identical files.
    """

    command: str
    config: Dict[str, Any]
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    seed: int = None
    version: str = laep.__version__

    def write(self, path: str):
        with open(path, "w") as f:
            json.dump(_jsonable(asdict(self)), f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def read(cls, path: str) -> "RunManifest":
        with open(path) as f:
            return cls(**json.load(f))
