"""Relay/AS removal simulation and availability metrics.

A post is available if at least one of its replicas survives. Curves remove
the top-X entities of a ranking cumulatively; AS removal takes down every
member relay of the AS.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .model import Dataset, ReplicaMap

RELAY_BY_POSTS = "relay_by_posts"
RELAY_BY_USERS = "relay_by_users"
AS_BY_POSTS = "as_by_posts"
AS_BY_USERS = "as_by_users"
AS_BY_RELAYS = "as_by_relays"
RANK_KINDS = (RELAY_BY_POSTS, RELAY_BY_USERS, AS_BY_POSTS, AS_BY_USERS, AS_BY_RELAYS)


@dataclass(frozen=True)
class Ranking:
    """Entities ordered by descending score; ties broken by ascending id."""

    kind: str
    ids: tuple[str, ...]
    scores: tuple[int, ...]

    def is_as_level(self) -> bool:
        return self.kind.startswith("as_")


@dataclass(frozen=True)
class AvailabilityCurve:
    """Percent of posts still available after removing the top X entities."""

    label: str
    points: tuple[tuple[int, float], ...]

    def at(self, x: int) -> float:
        for px, pv in self.points:
            if px == x:
                return pv
        raise ValueError(f"curve {self.label!r} has no point at X={x}")

    def validate(self) -> None:
        xs = [p[0] for p in self.points]
        vals = [p[1] for p in self.points]
        if not xs or xs[0] != 0:
            raise ValueError("curve must start at X=0")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("X values must be strictly increasing")
        if vals[0] != 100.0:
            raise ValueError("availability at X=0 must be 100%")
        if any(v < 0.0 or v > 100.0 for v in vals):
            raise ValueError("availability must lie in [0, 100]")
        if any(b > a for a, b in zip(vals, vals[1:])):
            raise ValueError("availability must be non-increasing in X")


def rank(dataset: Dataset, kind: str) -> Ranking:
    """Rank relays or ASes by post count, user count, or (ASes) relay count.

    AS post/user counts are distinct posts/users present on any member relay.
    """
    if kind not in RANK_KINDS:
        raise ValueError(f"unknown ranking kind {kind!r}; expected one of {RANK_KINDS}")
    rm = dataset.replica_map

    if kind in (RELAY_BY_POSTS, RELAY_BY_USERS):
        counts: dict[str, set[str]] = {r.relay_id: set() for r in dataset.relays}
        key = (lambda pid: pid) if kind == RELAY_BY_POSTS else (lambda pid: rm.post_authors[pid])
        for pid, relays in rm.entries.items():
            for r in relays:
                counts[r].add(key(pid))
        scored = {rid: len(s) for rid, s in counts.items()}
    else:
        groups = dataset.as_groups()
        if kind == AS_BY_RELAYS:
            scored = {a: len(members) for a, members in groups.items()}
        else:
            as_of = dataset.as_of_relay()
            acc: dict[str, set[str]] = {a: set() for a in groups}
            key = (lambda pid: pid) if kind == AS_BY_POSTS else (lambda pid: rm.post_authors[pid])
            for pid, relays in rm.entries.items():
                for r in relays:
                    acc[as_of[r]].add(key(pid))
            scored = {a: len(s) for a, s in acc.items()}

    ordered = sorted(scored, key=lambda i: (-scored[i], i))
    return Ranking(kind=kind, ids=tuple(ordered), scores=tuple(scored[i] for i in ordered))


def availability_after_removal(replica_map: ReplicaMap, removed_relays: set[str]) -> float:
    """100 x |{P : some replica of P survives}| / |P|; 100.0 for an empty map."""
    total = len(replica_map.entries)
    if total == 0:
        return 100.0
    alive = sum(1 for relays in replica_map.entries.values() if not relays <= removed_relays)
    return 100.0 * alive / total


def availability_curve(dataset: Dataset, ranking: Ranking, x_max: int,
                       replica_map: Optional[ReplicaMap] = None,
                       label: str = "original", jobs: Optional[int] = None) -> AvailabilityCurve:
    """Remove the top X entities for X in [0, x_max] and measure availability.

    ``replica_map`` overrides the dataset's map (capped scenarios); the
    ranking, computed on the intact dataset, is reused unchanged. AS-level
    rankings expand each AS to its member relays.
    """
    if x_max < 0:
        raise ValueError(f"x_max must be >= 0, got {x_max}")
    if x_max > len(ranking.ids):
        raise ValueError(f"x_max={x_max} exceeds ranking length {len(ranking.ids)}")
    rm = replica_map if replica_map is not None else dataset.replica_map
    groups = dataset.as_groups() if ranking.is_as_level() else None

    removed_at: list[set[str]] = [set()]
    for entity in ranking.ids[:x_max]:
        step = set(groups[entity]) if groups is not None else {entity}
        removed_at.append(removed_at[-1] | step)

    xs = range(x_max + 1)
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            vals = list(pool.map(lambda x: availability_after_removal(rm, removed_at[x]), xs))
    else:
        vals = [availability_after_removal(rm, removed_at[x]) for x in xs]
    return AvailabilityCurve(label=label, points=tuple(zip(xs, vals)))


def availability_delta(curve: AvailabilityCurve, original: AvailabilityCurve, x: int) -> float:
    """Signed difference in percentage points at X between a scenario and the original."""
    return curve.at(x) - original.at(x)


def mean_availability_delta(curve: AvailabilityCurve, original: AvailabilityCurve, x: int) -> float:
    """Average of the per-X availability differences over i = 1..X."""
    if x < 1:
        raise ValueError(f"X must be >= 1, got {x}")
    return sum(availability_delta(curve, original, i) for i in range(1, x + 1)) / x
