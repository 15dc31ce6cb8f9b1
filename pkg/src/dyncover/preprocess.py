"""Exact instance reductions: uncoverable/precovered user removal, merging
of users with identical coverage signatures, and the singleton user set
(users reachable by exactly one facility over the whole horizon)."""

from __future__ import annotations

from dataclasses import dataclass, field

from .model import Instance, UserRecord


@dataclass(frozen=True)
class PreprocessReport:
    removed_uncoverable: tuple[int, ...] = ()
    removed_precovered: tuple[int, ...] = ()
    aggregation_map: dict[int, int] = field(default_factory=dict)
    singles: frozenset[int] = frozenset()
    constant_offset: float = 0.0


def _rebuild(inst: Instance, users: tuple[UserRecord, ...]) -> Instance:
    return Instance(
        periods=inst.periods,
        facility_count=inst.facility_count,
        users=users,
        domain=inst.domain,
        name=inst.name,
    )


def drop_uncoverable(inst: Instance) -> tuple[Instance, PreprocessReport]:
    """Remove users no facility can ever reach; the objective is unchanged."""
    keep, removed = [], []
    for j, user in enumerate(inst.users):
        if any(user.covering):
            keep.append(j)
        else:
            removed.append(j)
    reduced = _rebuild(inst, tuple(inst.users[j] for j in keep))
    report = PreprocessReport(
        removed_uncoverable=tuple(removed),
        aggregation_map={j: k for k, j in enumerate(keep)},
        singles=frozenset(singles_set(reduced)),
    )
    return reduced, report


def drop_precovered(
    inst: Instance, precovered: set[int]
) -> tuple[Instance, PreprocessReport]:
    """Remove users whose coverage is guaranteed outside the model.

    Their whole-horizon demand moves into ``constant_offset`` so that
    value(reduced, x) + offset equals the original value with those users
    treated as always covered.
    """
    for j in precovered:
        if not 0 <= j < len(inst.users):
            raise ValueError(f"precovered user index {j} out of range")
    keep = [j for j in range(len(inst.users)) if j not in precovered]
    offset = sum(sum(inst.users[j].demands) for j in sorted(precovered))
    reduced = _rebuild(inst, tuple(inst.users[j] for j in keep))
    report = PreprocessReport(
        removed_precovered=tuple(sorted(precovered)),
        aggregation_map={j: k for k, j in enumerate(keep)},
        singles=frozenset(singles_set(reduced)),
        constant_offset=float(offset),
    )
    return reduced, report


def aggregate_users(inst: Instance) -> tuple[Instance, PreprocessReport]:
    """Merge users with identical full coverage signatures across periods.

    Merged demands are per-period sums, so every solution keeps its exact
    objective value regardless of the domain.
    """
    groups: dict[tuple[tuple[int, ...], ...], int] = {}
    merged: list[list[float]] = []
    covering: list[tuple[tuple[int, ...], ...]] = []
    mapping: dict[int, int] = {}
    for j, user in enumerate(inst.users):
        key = user.covering
        if key in groups:
            k = groups[key]
            for t, d in enumerate(user.demands):
                merged[k][t] += d
        else:
            k = len(merged)
            groups[key] = k
            merged.append(list(user.demands))
            covering.append(user.covering)
        mapping[j] = k
    users = tuple(
        UserRecord(tuple(demands), cov) for demands, cov in zip(merged, covering)
    )
    reduced = _rebuild(inst, users)
    report = PreprocessReport(
        aggregation_map=mapping, singles=frozenset(singles_set(reduced))
    )
    return reduced, report


def singles_set(inst: Instance) -> set[int]:
    """Users covered by exactly one (facility, period) pair over the horizon."""
    return {
        j
        for j, user in enumerate(inst.users)
        if sum(len(cov) for cov in user.covering) == 1
    }
