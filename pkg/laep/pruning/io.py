import json
import math
from typing import Any, Dict

from laep.pruning.markers import LayerDecision, PruneDecision
from laep.utils.exceptions import ConfigError, ValidationError


def _alpha_out(alpha: float):
    return alpha if math.isfinite(alpha) else "inf"


def decision_to_dict(decision: PruneDecision) -> Dict[str, Any]:
    document = {
        "beta": decision.beta,
        "alpha": None if decision.alpha is None else [_alpha_out(a) for a in decision.alpha],
        "layers": [
            {
                "layer": d.layer,
                "pruned": list(d.pruned),
                "markers": list(d.markers),
                "survivors": list(d.survivors),
            }
            for d in decision.layers
        ],
    }
    if decision.stable_iteration is not None:
        document["stable_iteration"] = decision.stable_iteration
    if decision.window is not None:
        document["window"] = list(decision.window)
    return document


def decision_from_dict(document: Dict[str, Any]) -> PruneDecision:
    try:
        alpha = document.get("alpha")
        layers = tuple(
            LayerDecision(
                layer=int(entry["layer"]),
                pruned=tuple(int(i) for i in entry["pruned"]),
                markers=tuple(int(m) for m in entry["markers"]),
                survivors=tuple(int(i) for i in entry["survivors"]),
            )
            for entry in document["layers"]
        )
        window = document.get("window")
        return PruneDecision(
            layers=layers,
            beta=document.get("beta"),
            alpha=None if alpha is None else tuple(float(a) for a in alpha),
            stable_iteration=document.get("stable_iteration"),
            window=None if window is None else tuple(window),
        )
    except KeyError as e:
        raise ConfigError(f"decision is missing key {e.args[0]!r}", key=e.args[0])
    except (TypeError, ValueError) as e:
        raise ValidationError(f"malformed decision: {e}")


def write_decision(decision: PruneDecision, path: str):
    with open(path, "w") as f:
        json.dump(decision_to_dict(decision), f, indent=2, sort_keys=True)
        f.write("\n")


def read_decision(path: str) -> PruneDecision:
    try:
        with open(path) as f:
            document = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"decision file {path!r} does not exist")
    except json.JSONDecodeError as e:
        raise ValidationError(f"decision file {path!r} is not valid JSON: {e}")
    return decision_from_dict(document)
