"""Retrieval-traffic model over the follower graph and optimistic top-N retrieval.

In the baseline model a follower U fetches every post of followee V from all
relays U uses, so a post is downloaded once per relay in the intersection of
the post's replicas and U's relay set. The optimistic model fetches from V's
top-N relays instead (ranked by how many of V's posts each relay holds).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .model import Dataset, ReplicaMap


@dataclass(frozen=True)
class EdgeTraffic:
    """Retrieval totals for one following edge; wasted = retrieval - optimal."""

    follower: str
    followee: str
    retrieval_count: int
    retrieval_bytes: int
    optimal_count: int
    optimal_bytes: int

    @property
    def wasted_count(self) -> int:
        return self.retrieval_count - self.optimal_count

    @property
    def wasted_bytes(self) -> int:
        return self.retrieval_bytes - self.optimal_bytes


@dataclass(frozen=True)
class TopNSelection:
    """A user's relays ranked by how many of their posts each holds."""

    pubkey: str
    n: int
    relay_ids: tuple[str, ...]
    post_counts: tuple[int, ...]


@dataclass(frozen=True)
class GraphTraffic:
    edges: int
    retrieval_count: int
    retrieval_bytes: int
    optimal_count: int
    optimal_bytes: int

    @property
    def wasted_count(self) -> int:
        return self.retrieval_count - self.optimal_count

    @property
    def wasted_bytes(self) -> int:
        return self.retrieval_bytes - self.optimal_bytes

    @property
    def percent_wasted_count(self) -> float:
        return 100.0 * self.wasted_count / self.retrieval_count if self.retrieval_count else 0.0

    @property
    def percent_wasted_bytes(self) -> float:
        return 100.0 * self.wasted_bytes / self.retrieval_bytes if self.retrieval_bytes else 0.0

    @property
    def mean_retrieval_count_per_edge(self) -> float:
        return self.retrieval_count / self.edges if self.edges else 0.0

    @property
    def mean_optimal_count_per_edge(self) -> float:
        return self.optimal_count / self.edges if self.edges else 0.0


@dataclass(frozen=True)
class OptimisticTraffic:
    """Aggregates when every follower reads only from the followee's top-N relays."""

    n: int
    completeness_mean: float
    retrieval_count: int
    retrieval_bytes: int
    optimal_count: int
    optimal_bytes: int
    wasted_count: int
    wasted_bytes: int
    wasted_count_pct_of_original: float
    wasted_bytes_pct_of_original: float


def posts_by_author(replica_map: ReplicaMap) -> dict[str, list[str]]:
    """author pubkey -> sorted post ids (deterministic iteration)."""
    out: dict[str, list[str]] = {}
    for pid, author in replica_map.post_authors.items():
        out.setdefault(author, []).append(pid)
    for a in out:
        out[a].sort()
    return out


def retrieval_count(post_id: str, user: str, replica_map: ReplicaMap,
                    user_relays: Mapping[str, frozenset[str]]) -> int:
    """How many relays the user redundantly fetches the post from."""
    return len(replica_map.entries[post_id] & user_relays.get(user, frozenset()))


def _traffic_against(replica_map: ReplicaMap, post_ids: Iterable[str], relay_set: frozenset[str],
                     optimal_includes_unreachable: bool) -> tuple[int, int, int, int]:
    """(count, bytes, optimal_count, optimal_bytes) retrieving the posts from relay_set."""
    count = size = opt_count = opt_size = 0
    for pid in post_ids:
        c = len(replica_map.entries[pid] & relay_set)
        b = replica_map.post_sizes[pid]
        count += c
        size += c * b
        if c >= 1 or optimal_includes_unreachable:
            opt_count += 1
            opt_size += b
    return count, size, opt_count, opt_size


def edge_traffic(edge: tuple[str, str], dataset: Dataset, *,
                 optimal_includes_unreachable: bool = False) -> EdgeTraffic:
    """Retrieval totals over one following edge (follower, followee).

    Posts on none of the follower's relays contribute 0 to both retrieval and
    optimal by default; with optimal_includes_unreachable they still count one
    optimal retrieval each.
    """
    u, v = edge
    posts = posts_by_author(dataset.replica_map).get(v, [])
    relay_set = dataset.user_relays.get(u, frozenset())
    c, b, oc, ob = _traffic_against(dataset.replica_map, posts, relay_set,
                                    optimal_includes_unreachable)
    return EdgeTraffic(follower=u, followee=v, retrieval_count=c, retrieval_bytes=b,
                       optimal_count=oc, optimal_bytes=ob)


def all_edge_traffic(dataset: Dataset, *,
                     optimal_includes_unreachable: bool = False) -> list[EdgeTraffic]:
    """Per-edge traffic for every edge, sorted by (follower, followee)."""
    by_author = posts_by_author(dataset.replica_map)
    out = []
    for u, v in sorted(dataset.follower_graph.edges):
        c, b, oc, ob = _traffic_against(dataset.replica_map, by_author.get(v, []),
                                        dataset.user_relays.get(u, frozenset()),
                                        optimal_includes_unreachable)
        out.append(EdgeTraffic(follower=u, followee=v, retrieval_count=c, retrieval_bytes=b,
                               optimal_count=oc, optimal_bytes=ob))
    return out


def graph_traffic(dataset: Dataset, *,
                  optimal_includes_unreachable: bool = False) -> GraphTraffic:
    """Totals over the whole follower graph."""
    per_edge = all_edge_traffic(dataset, optimal_includes_unreachable=optimal_includes_unreachable)
    return GraphTraffic(
        edges=len(per_edge),
        retrieval_count=sum(e.retrieval_count for e in per_edge),
        retrieval_bytes=sum(e.retrieval_bytes for e in per_edge),
        optimal_count=sum(e.optimal_count for e in per_edge),
        optimal_bytes=sum(e.optimal_bytes for e in per_edge),
    )


def select_top_n(author: str, dataset: Dataset, n: int) -> TopNSelection:
    """The author's top-N relays by held post count, ties by ascending relay id."""
    if n < 1:
        raise ValueError(f"N must be >= 1, got {n}")
    posts = posts_by_author(dataset.replica_map).get(author)
    if not posts:
        raise ValueError(f"unknown author (no posts): {author}")
    counts: dict[str, int] = {}
    for pid in posts:
        for r in dataset.replica_map.entries[pid]:
            counts[r] = counts.get(r, 0) + 1
    ordered = sorted(counts, key=lambda r: (-counts[r], r))[:n]
    return TopNSelection(pubkey=author, n=n, relay_ids=tuple(ordered),
                         post_counts=tuple(counts[r] for r in ordered))


def coverage(user: str, relay_set: Iterable[str], dataset: Dataset) -> float:
    """Percent of the user's posts stored on at least one relay of the set."""
    posts = posts_by_author(dataset.replica_map).get(user)
    if not posts:
        raise ValueError(f"unknown author (no posts): {user}")
    rs = frozenset(relay_set)
    covered = sum(1 for pid in posts if dataset.replica_map.entries[pid] & rs)
    return 100.0 * covered / len(posts)


def edge_completeness(edge: tuple[str, str], n: int, dataset: Dataset) -> float:
    """Percent of the followee's posts the follower gets from the followee's top-N relays."""
    _, v = edge
    if edge not in dataset.follower_graph.edges:
        raise ValueError(f"edge {edge} not in the follower graph")
    return coverage(v, select_top_n(v, dataset, n).relay_ids, dataset)


def optimistic_traffic(dataset: Dataset, n: int, *,
                       original: Optional[GraphTraffic] = None,
                       optimal_includes_unreachable: bool = False) -> OptimisticTraffic:
    """Recompute graph traffic reading each followee's posts from their top-N relays.

    completeness_mean averages per-edge completeness over edges whose followee
    authored at least one post (other edges carry no posts at all).
    """
    if original is None:
        original = graph_traffic(dataset, optimal_includes_unreachable=optimal_includes_unreachable)
    by_author = posts_by_author(dataset.replica_map)
    rm = dataset.replica_map

    selections: dict[str, frozenset[str]] = {}
    completeness_by_author: dict[str, float] = {}
    count = size = opt_count = opt_size = 0
    completeness_sum = 0.0
    completeness_edges = 0

    for u, v in sorted(dataset.follower_graph.edges):
        posts = by_author.get(v)
        if not posts:
            continue
        if v not in selections:
            selections[v] = frozenset(select_top_n(v, dataset, n).relay_ids)
            covered = sum(1 for pid in posts if rm.entries[pid] & selections[v])
            completeness_by_author[v] = 100.0 * covered / len(posts)
        c, b, oc, ob = _traffic_against(rm, posts, selections[v], optimal_includes_unreachable)
        count += c
        size += b
        opt_count += oc
        opt_size += ob
        completeness_sum += completeness_by_author[v]
        completeness_edges += 1

    wasted_count = count - opt_count
    wasted_bytes = size - opt_size
    return OptimisticTraffic(
        n=n,
        completeness_mean=(completeness_sum / completeness_edges) if completeness_edges else 100.0,
        retrieval_count=count,
        retrieval_bytes=size,
        optimal_count=opt_count,
        optimal_bytes=opt_size,
        wasted_count=wasted_count,
        wasted_bytes=wasted_bytes,
        wasted_count_pct_of_original=(100.0 * wasted_count / original.wasted_count
                                      if original.wasted_count else 0.0),
        wasted_bytes_pct_of_original=(100.0 * wasted_bytes / original.wasted_bytes
                                      if original.wasted_bytes else 0.0),
    )


def optimistic_summary(dataset: Dataset, ns: Sequence[int], *,
                       optimal_includes_unreachable: bool = False
                       ) -> tuple[GraphTraffic, list[OptimisticTraffic]]:
    """Original totals plus one optimistic row per N (original computed once)."""
    original = graph_traffic(dataset, optimal_includes_unreachable=optimal_includes_unreachable)
    rows = [optimistic_traffic(dataset, n, original=original,
                               optimal_includes_unreachable=optimal_includes_unreachable)
            for n in ns]
    return original, rows
