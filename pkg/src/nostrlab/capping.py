"""Replication-cap strategies and redundancy-savings accounting.

Caps are applied post-hoc to a replica map: every post stored on more than N
relays keeps only a selected N-subset. Selection is seeded per post from
(seed, post id), so results are independent of iteration order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Collection, Mapping, Optional

import numpy as np

from .model import ReplicaMap

RANDOM = "random"
AS_BASED = "as_based"
STRATEGY_KINDS = (RANDOM, AS_BASED)


@dataclass(frozen=True)
class CapStrategy:
    kind: str  # "random" | "as_based"
    n: int
    seed: int

    def validate(self) -> None:
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {STRATEGY_KINDS}")
        if self.n < 1:
            raise ValueError(f"cap N must be >= 1, got {self.n}")


def savings(replica_map: ReplicaMap, n: int) -> int:
    """Replicas eliminated by capping at N: sum over posts of max(0, M_P - N)."""
    if n < 1:
        raise ValueError(f"cap N must be >= 1, got {n}")
    return sum(max(0, len(relays) - n) for relays in replica_map.entries.values())


def cap_random(relays: Collection[str], n: int, rng: np.random.Generator) -> frozenset[str]:
    """Uniform N-subset without replacement; sets of size <= N pass through."""
    pool = sorted(relays)
    if len(pool) <= n:
        return frozenset(pool)
    picked = rng.choice(len(pool), size=n, replace=False)
    return frozenset(pool[i] for i in picked)


def cap_as_based(relays: Collection[str], n: int, as_of: Mapping[str, str],
                 rng: np.random.Generator) -> frozenset[str]:
    """N-subset spanning as many ASes as possible.

    One uniform-random relay per AS first (a uniform-random N-subset of ASes
    when there are more ASes than N), then uniform fill from the remaining
    relays. The result spans min(N, distinct ASes) ASes.
    """
    pool = sorted(relays)
    if len(pool) <= n:
        return frozenset(pool)

    by_as: dict[str, list[str]] = {}
    for r in pool:
        by_as.setdefault(as_of[r], []).append(r)
    as_keys = sorted(by_as)

    if len(as_keys) > n:
        kept = rng.choice(len(as_keys), size=n, replace=False)
        as_keys = [as_keys[i] for i in sorted(kept)]

    chosen = set()
    for a in as_keys:
        members = by_as[a]
        chosen.add(members[int(rng.integers(len(members)))])

    remaining = [r for r in pool if r not in chosen]
    fill = n - len(chosen)
    if fill > 0:
        extra = rng.choice(len(remaining), size=fill, replace=False)
        chosen.update(remaining[i] for i in extra)
    return frozenset(chosen)


def _post_rng(seed: int, post_id: str) -> np.random.Generator:
    # Substream keyed by (seed, post id): deterministic and order-independent.
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, int(post_id, 16)])


def apply_cap(replica_map: ReplicaMap, strategy: CapStrategy,
              as_of: Optional[Mapping[str, str]] = None,
              jobs: Optional[int] = None) -> ReplicaMap:
    """Return a new map with every replica set capped at N; the input is untouched."""
    strategy.validate()
    if strategy.kind == AS_BASED and as_of is None:
        raise ValueError("as_based capping needs the relay -> AS mapping")

    def cap_one(pid: str) -> tuple[str, frozenset[str]]:
        relays = replica_map.entries[pid]
        if len(relays) <= strategy.n:
            return pid, relays
        rng = _post_rng(strategy.seed, pid)
        if strategy.kind == RANDOM:
            return pid, cap_random(relays, strategy.n, rng)
        return pid, cap_as_based(relays, strategy.n, as_of, rng)

    pids = sorted(replica_map.entries)
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            capped = dict(pool.map(cap_one, pids))
    else:
        capped = dict(cap_one(pid) for pid in pids)
    return ReplicaMap(entries=capped,
                      post_sizes=dict(replica_map.post_sizes),
                      post_authors=dict(replica_map.post_authors))
