import numpy as np
from dataclasses import dataclass
from loguru import logger
from typing import List, Sequence, Tuple

from laep.utils.exceptions import DimensionMismatchError, ValidationError


@dataclass(frozen=True)
class GroupAssignment:
    """Placement of experts into ``num_groups`` device groups of ``group_size`` slots.

    Groups hold original expert ids. When the expert count is not a multiple of
    ``num_groups`` the list was padded with zero-load virtual experts before
    placement; those are stripped here, so a group may hold fewer than
    ``group_size`` real experts (``num_padded`` of them in total).
    """

    num_groups: int
    group_size: int
    groups: Tuple[Tuple[int, ...], ...]
    group_sums: Tuple[int, ...]
    num_padded: int = 0

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(tuple(int(i) for i in g) for g in self.groups))
        object.__setattr__(self, "group_sums", tuple(int(s) for s in self.group_sums))
        if len(self.groups) != self.num_groups or len(self.group_sums) != self.num_groups:
            raise ValidationError(
                f"expected {self.num_groups} groups, got {len(self.groups)} groups and {len(self.group_sums)} sums"
            )
        members = [i for g in self.groups for i in g]
        if len(set(members)) != len(members):
            raise ValidationError("an expert appears in more than one group")
        if len(members) + self.num_padded != self.num_groups * self.group_size:
            raise ValidationError(
                f"{len(members)} experts plus {self.num_padded} padding do not fill "
                f"{self.num_groups} groups of {self.group_size}"
            )
        if any(len(g) > self.group_size for g in self.groups):
            raise ValidationError(f"a group holds more than {self.group_size} experts")

    @property
    def reordered(self) -> List[int]:
        return [i for g in self.groups for i in g]

    @property
    def experts(self) -> set:
        return set(self.reordered)

    def group_of(self, expert: int) -> int:
        for g, members in enumerate(self.groups):
            if expert in members:
                return g
        raise KeyError(expert)

    def recompute_sums(self, loads_by_id: dict) -> List[int]:
        return [sum(int(loads_by_id[i]) for i in g) for g in self.groups]


@dataclass(frozen=True)
class BalanceMetrics:
    max_group_sum: float
    min_group_sum: float
    variance: float
    imbalance_ratio: float


def _prepare(loads: Sequence[int], num_groups: int, expert_ids: Sequence[int] = None):
    loads = np.asarray(loads, dtype=np.int64)
    if loads.ndim != 1 or len(loads) == 0:
        raise ValidationError("loads must be a non-empty 1-D array")
    if (loads < 0).any():
        raise ValidationError("loads must be non-negative")
    if num_groups < 1:
        raise ValidationError(f"num_groups must be positive, got {num_groups}")
    if expert_ids is None:
        expert_ids = list(range(len(loads)))
    expert_ids = [int(i) for i in expert_ids]
    if len(expert_ids) != len(loads):
        raise DimensionMismatchError(f"{len(expert_ids)} expert ids for {len(loads)} loads")
    if len(set(expert_ids)) != len(expert_ids):
        raise ValidationError("expert ids must be distinct")

    num_padded = -len(loads) % num_groups
    if num_padded:
        logger.debug(f"Padding {len(loads)} experts with {num_padded} zero-load entries for {num_groups} groups")
    padded = np.concatenate([loads, np.zeros(num_padded, dtype=np.int64)])
    return padded, expert_ids, num_padded, len(padded) // num_groups


def rearrange(loads: Sequence[int], num_groups: int, expert_ids: Sequence[int] = None) -> GroupAssignment:
    """Greedy balanced placement of experts into equal-size groups.

    Experts are taken in descending load order (ties: lower position first) and
    each goes to the non-full group with the smallest current sum (ties: lowest
    group index).

    Args:
        loads (Sequence[int]): Token load per expert.
        num_groups (int): Number of device groups.
        expert_ids (Sequence[int], optional): Ids reported in the groups, defaults to positions.
    """
    padded, expert_ids, num_padded, group_size = _prepare(loads, num_groups, expert_ids)

    groups = [[] for _ in range(num_groups)]
    sums = np.zeros(num_groups, dtype=np.int64)
    for position in sorted(range(len(padded)), key=lambda i: (-padded[i], i)):
        open_groups = [g for g in range(num_groups) if len(groups[g]) < group_size]
        target = min(open_groups, key=lambda g: (sums[g], g))
        groups[target].append(position)
        sums[target] += padded[position]

    real = len(expert_ids)
    return GroupAssignment(
        num_groups=num_groups,
        group_size=group_size,
        groups=tuple(tuple(expert_ids[p] for p in g if p < real) for g in groups),
        group_sums=tuple(int(s) for s in sums),
        num_padded=num_padded,
    )


def contiguous_baseline(loads: Sequence[int], num_groups: int, expert_ids: Sequence[int] = None) -> GroupAssignment:
    """Default expert-parallel placement: consecutive experts per group in index order."""
    padded, expert_ids, num_padded, group_size = _prepare(loads, num_groups, expert_ids)

    real = len(expert_ids)
    groups, sums = [], []
    for g in range(num_groups):
        positions = range(g * group_size, (g + 1) * group_size)
        groups.append(tuple(expert_ids[p] for p in positions if p < real))
        sums.append(int(sum(padded[p] for p in positions)))

    return GroupAssignment(
        num_groups=num_groups,
        group_size=group_size,
        groups=tuple(groups),
        group_sums=tuple(sums),
        num_padded=num_padded,
    )


def balance_metrics(assignment: GroupAssignment) -> BalanceMetrics:
    sums = np.asarray(assignment.group_sums, dtype=np.float64)
    mean = sums.mean()
    return BalanceMetrics(
        max_group_sum=float(sums.max()),
        min_group_sum=float(sums.min()),
        variance=float(sums.var()),
        imbalance_ratio=float(sums.max() / mean) if mean > 0 else 1.0,
    )


def remove_experts(assignment: GroupAssignment, experts, loads_by_id) -> GroupAssignment:
    """Drops ``experts`` from their groups in place; other members keep their devices.

    Args:
        loads_by_id: Mapping or array from expert id to load, used for the new sums.
    """
    experts = set(int(i) for i in experts)
    groups = tuple(tuple(i for i in g if i not in experts) for g in assignment.groups)
    removed = sum(len(g) for g in assignment.groups) - sum(len(g) for g in groups)
    return GroupAssignment(
        num_groups=assignment.num_groups,
        group_size=assignment.group_size,
        groups=groups,
        group_sums=tuple(sum(int(loads_by_id[i]) for i in g) for g in groups),
        num_padded=assignment.num_padded + removed,
    )
