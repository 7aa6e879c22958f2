import json
from typing import List

from laep.rearrange.greedy import GroupAssignment
from laep.rearrange.periodic import LayerPlacement
from laep.utils.exceptions import ConfigError, ValidationError


def placement_to_list(placements: List[LayerPlacement]) -> list:
    entries = []
    for placement in placements:
        assignment = placement.assignment
        entry = {
            "layer": placement.layer,
            "num_groups": assignment.num_groups,
            "group_size": assignment.group_size,
            "groups": [list(g) for g in assignment.groups],
            "group_sums": list(assignment.group_sums),
        }
        if placement.iter_begin is not None:
            entry["iter_begin"] = placement.iter_begin
        entries.append(entry)
    return entries


def placement_from_list(entries: list) -> List[LayerPlacement]:
    placements = []
    try:
        for entry in entries:
            groups = entry["groups"]
            num_groups = int(entry["num_groups"])
            group_size = int(entry.get("group_size", max(len(g) for g in groups)))
            members = sum(len(g) for g in groups)
            assignment = GroupAssignment(
                num_groups=num_groups,
                group_size=group_size,
                groups=groups,
                group_sums=entry["group_sums"],
                num_padded=num_groups * group_size - members,
            )
            placements.append(
                LayerPlacement(layer=int(entry["layer"]), assignment=assignment, iter_begin=entry.get("iter_begin"))
            )
    except KeyError as e:
        raise ConfigError(f"placement entry is missing key {e.args[0]!r}", key=e.args[0])
    except (TypeError, ValueError) as e:
        raise ValidationError(f"malformed placement: {e}")
    return placements


def write_placement(placements: List[LayerPlacement], path: str):
    with open(path, "w") as f:
        json.dump(placement_to_list(placements), f, indent=2, sort_keys=True)
        f.write("\n")


def read_placement(path: str) -> List[LayerPlacement]:
    try:
        with open(path) as f:
            entries = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"placement file {path!r} does not exist")
    except json.JSONDecodeError as e:
        raise ValidationError(f"placement file {path!r} is not valid JSON: {e}")
    if not isinstance(entries, list):
        raise ValidationError(f"placement file {path!r} must hold a JSON array")
    return placement_from_list(entries)
