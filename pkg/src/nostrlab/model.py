"""Core domain types: events, relays, replica maps, follower graphs, datasets.

Everything here is immutable after construction; all analyses in the other
modules are pure functions over a ``Dataset``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

PROFILE_KIND = 0
POST_KIND = 1
CONTACT_KIND = 3
# Kinds admitted into analyses; anything else is retained but ignored by metrics.
METRIC_KINDS = frozenset({PROFILE_KIND, POST_KIND, CONTACT_KIND})

# Wire field order, used for canonical dump serialization.
EVENT_FIELDS = ("id", "pubkey", "created_at", "kind", "tags", "content", "sig")

_HEX64 = re.compile(r"^[0-9a-f]{64}$")
_HEX128 = re.compile(r"^[0-9a-f]{128}$")


class AssemblyError(ValueError):
    """Cross-reference or invariant failure while building a Dataset."""


def event_id(pubkey: str, created_at: int, kind: int, tags: Sequence[Sequence[str]], content: str) -> str:
    """Canonical event identity: SHA-256 of [0, pubkey, created_at, kind, tags, content].

    The array is serialized as compact JSON (no whitespace, non-ASCII kept
    verbatim) and hashed as UTF-8.
    """
    payload = [0, pubkey, created_at, kind, [list(t) for t in tags], content]
    serialized = json.dumps(payload, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(serialized.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class Event:
    """A signed Nostr record (NIP-01). ``size_bytes`` is the stored byte size.

    For events parsed from a dump, size_bytes is the raw line's UTF-8 length;
    for events built in memory it is the canonical serialization length (the
    two coincide for dumps written by this package).
    """

    id: str
    pubkey: str
    created_at: int
    kind: int
    tags: tuple[tuple[str, ...], ...]
    content: str
    sig: str
    size_bytes: int

    def to_wire_dict(self) -> dict:
        return {
            "id": self.id,
            "pubkey": self.pubkey,
            "created_at": self.created_at,
            "kind": self.kind,
            "tags": [list(t) for t in self.tags],
            "content": self.content,
            "sig": self.sig,
        }

    def to_wire_json(self) -> str:
        """Compact JSON with fields in NIP-01 order."""
        d = self.to_wire_dict()
        return json.dumps({k: d[k] for k in EVENT_FIELDS}, separators=(",", ":"), ensure_ascii=False)


def make_event(pubkey: str, created_at: int, kind: int, tags: Sequence[Sequence[str]],
               content: str, sig: str = "0" * 128) -> Event:
    """Build an Event in memory, computing its id and canonical size."""
    eid = event_id(pubkey, created_at, kind, tags, content)
    tup = tuple(tuple(t) for t in tags)
    ev = Event(id=eid, pubkey=pubkey, created_at=created_at, kind=kind,
               tags=tup, content=content, sig=sig, size_bytes=0)
    size = len(ev.to_wire_json().encode("utf-8"))
    return Event(id=eid, pubkey=pubkey, created_at=created_at, kind=kind,
                 tags=tup, content=content, sig=sig, size_bytes=size)


def validate_event(ev: Event) -> None:
    """Shape checks shared by parser and assembler. Raises ValueError."""
    if not _HEX64.match(ev.id):
        raise ValueError(f"event id is not 64-char lowercase hex: {ev.id!r}")
    if not _HEX64.match(ev.pubkey):
        raise ValueError(f"pubkey is not 64-char lowercase hex: {ev.pubkey!r}")
    if not _HEX128.match(ev.sig):
        raise ValueError(f"sig is not 128-char lowercase hex: {ev.sig!r}")
    if ev.kind < 0:
        raise ValueError(f"kind must be non-negative: {ev.kind}")
    if ev.created_at < 0:
        raise ValueError(f"created_at must be non-negative: {ev.created_at}")
    if ev.size_bytes <= 0:
        raise ValueError(f"size_bytes must be positive: {ev.size_bytes}")


@dataclass(frozen=True)
class RelayRecord:
    """Relay identity plus AS/country attribution. Immutable once assembled."""

    relay_id: str
    url: str
    asn: Optional[int] = None
    country: Optional[str] = None
    paid: bool = False

    @property
    def as_key(self) -> str:
        """Grouping key for AS-level analyses.

        Relays with unknown AS each form their own singleton group so that
        AS-removal scenarios can still target them individually.
        """
        return f"AS{self.asn}" if self.asn is not None else f"unknown:{self.relay_id}"


@dataclass(frozen=True)
class ReplicaMap:
    """post-id -> set of relay-ids where the post is stored, plus sizes/authors."""

    entries: Mapping[str, frozenset[str]]
    post_sizes: Mapping[str, int]
    post_authors: Mapping[str, str]

    def replication_count(self, post_id: str) -> int:
        return len(self.entries[post_id])

    def total_replicas(self) -> int:
        return sum(len(s) for s in self.entries.values())

    def post_ids(self) -> list[str]:
        return sorted(self.entries)


@dataclass(frozen=True)
class FollowerGraph:
    """Directed follow relationships; edge (U, V) means U follows V."""

    edges: frozenset[tuple[str, str]]

    def followees(self, follower: str) -> set[str]:
        return {v for (u, v) in self.edges if u == follower}

    def edges_by_followee(self) -> dict[str, list[str]]:
        """followee -> sorted list of followers (deterministic iteration)."""
        out: dict[str, list[str]] = {}
        for u, v in self.edges:
            out.setdefault(v, []).append(u)
        for v in out:
            out[v].sort()
        return out


@dataclass(frozen=True)
class Dataset:
    """Immutable bundle of relays, replica map, follower graph and relay usage."""

    relays: tuple[RelayRecord, ...]
    replica_map: ReplicaMap
    follower_graph: FollowerGraph
    user_relays: Mapping[str, frozenset[str]]

    def relay_ids(self) -> frozenset[str]:
        return frozenset(r.relay_id for r in self.relays)

    def relay_by_id(self) -> dict[str, RelayRecord]:
        return {r.relay_id: r for r in self.relays}

    def as_of_relay(self) -> dict[str, str]:
        return {r.relay_id: r.as_key for r in self.relays}

    def as_groups(self) -> dict[str, frozenset[str]]:
        """AS key -> member relay ids (unknown-AS relays are singletons)."""
        groups: dict[str, set[str]] = {}
        for r in self.relays:
            groups.setdefault(r.as_key, set()).add(r.relay_id)
        return {k: frozenset(v) for k, v in groups.items()}

    def summary(self) -> dict:
        """Counts used in reports: posts, users, replicas, relays, ASes, countries.

        ``countries`` counts distinct known ISO codes (unknown-country relays
        are excluded); ``ases`` counts AS groups including unknown singletons.
        ``users`` counts authors of at least one post.
        """
        posts = len(self.replica_map.entries)
        replicas = self.replica_map.total_replicas()
        return {
            "posts": posts,
            "users": len(set(self.replica_map.post_authors.values())),
            "replicas": replicas,
            "relays": len(self.relays),
            "ases": len(self.as_groups()),
            "countries": len({r.country for r in self.relays if r.country}),
            "mean_replication": (replicas / posts) if posts else 0.0,
        }

    def fingerprint(self) -> str:
        """SHA-256 over a canonical JSON projection of the full dataset."""
        proj = {
            "relays": [[r.relay_id, r.url, r.asn, r.country, r.paid]
                       for r in sorted(self.relays, key=lambda r: r.relay_id)],
            "entries": {p: sorted(s) for p, s in sorted(self.replica_map.entries.items())},
            "sizes": dict(sorted(self.replica_map.post_sizes.items())),
            "authors": dict(sorted(self.replica_map.post_authors.items())),
            "edges": sorted(self.follower_graph.edges),
            "user_relays": {u: sorted(s) for u, s in sorted(self.user_relays.items())},
        }
        blob = json.dumps(proj, separators=(",", ":"), sort_keys=True)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def validate(self) -> None:
        """Cross-reference closure; raises AssemblyError aggregating all failures."""
        problems = []
        ids = [r.relay_id for r in self.relays]
        known = set(ids)
        if len(ids) != len(known):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            problems.append(f"duplicate relay ids: {dupes}")
        for pid, relays in self.replica_map.entries.items():
            if not relays:
                problems.append(f"post {pid} has an empty replica set")
            unknown = relays - known
            if unknown:
                problems.append(f"post {pid} references unknown relays: {sorted(unknown)}")
            if pid not in self.replica_map.post_sizes:
                problems.append(f"post {pid} has no size")
            if pid not in self.replica_map.post_authors:
                problems.append(f"post {pid} has no author")
        for pid, size in self.replica_map.post_sizes.items():
            if size <= 0:
                problems.append(f"post {pid} has non-positive size {size}")
        for u, v in self.follower_graph.edges:
            if u == v:
                problems.append(f"self-loop edge ({u}, {v})")
        for user, relays in self.user_relays.items():
            unknown = relays - known
            if unknown:
                problems.append(f"user {user} uses unknown relays: {sorted(unknown)}")
        if problems:
            raise AssemblyError("dataset validation failed:\n  " + "\n  ".join(sorted(problems)))


def build_replica_map(events: Iterable[Event], event_locations: Mapping[str, Iterable[str]],
                      known_relays: Optional[set[str]] = None) -> ReplicaMap:
    """Build the post -> relays map from deduplicated events and their locations.

    Only kind-1 events become entries; locations referencing relays outside
    ``known_relays`` raise AssemblyError listing every offender.
    """
    entries: dict[str, frozenset[str]] = {}
    sizes: dict[str, int] = {}
    authors: dict[str, str] = {}
    offenders = []
    for ev in events:
        if ev.kind != POST_KIND:
            continue
        locs = frozenset(event_locations.get(ev.id, ()))
        if not locs:
            continue
        if known_relays is not None:
            unknown = locs - known_relays
            if unknown:
                offenders.append(f"post {ev.id} on unknown relays {sorted(unknown)}")
                continue
        entries[ev.id] = locs
        sizes[ev.id] = ev.size_bytes
        authors[ev.id] = ev.pubkey
    if offenders:
        raise AssemblyError("locations reference unknown relays:\n  " + "\n  ".join(offenders))
    return ReplicaMap(entries=entries, post_sizes=sizes, post_authors=authors)


def _followee_keys(ev: Event) -> tuple[list[str], int]:
    """Extract followed pubkeys from a kind-3 event's "p" tags.

    Returns (pubkeys, malformed_count); malformed "p" tags are skipped.
    """
    out, malformed = [], 0
    for tag in ev.tags:
        if not tag or tag[0] != "p":
            continue
        if len(tag) < 2 or not _HEX64.match(tag[1]):
            malformed += 1
            continue
        out.append(tag[1])
    return out, malformed


def build_follower_graph(contact_events: Iterable[Event]) -> FollowerGraph:
    """Build the follow graph from kind-3 contact lists, latest snapshot per author.

    For equal created_at the lexicographically larger event id wins, which
    makes the result independent of input ordering. Self-follows are dropped;
    malformed "p" tags are skipped and counted in a log warning.
    """
    latest: dict[str, Event] = {}
    for ev in contact_events:
        if ev.kind != CONTACT_KIND:
            continue
        cur = latest.get(ev.pubkey)
        if cur is None or (ev.created_at, ev.id) > (cur.created_at, cur.id):
            latest[ev.pubkey] = ev
    edges = set()
    malformed_total = 0
    for author, ev in latest.items():
        followees, malformed = _followee_keys(ev)
        malformed_total += malformed
        for v in followees:
            if v != author:
                edges.add((author, v))
    if malformed_total:
        logger.warning("skipped %d malformed 'p' tags while building follower graph", malformed_total)
    return FollowerGraph(edges=frozenset(edges))


def derive_user_relays(replica_map: ReplicaMap) -> dict[str, frozenset[str]]:
    """relay r belongs to user U's set iff U has at least one post stored on r."""
    acc: dict[str, set[str]] = {}
    for pid, relays in replica_map.entries.items():
        acc.setdefault(replica_map.post_authors[pid], set()).update(relays)
    return {u: frozenset(s) for u, s in acc.items()}


def build_dataset(relay_records: Sequence[RelayRecord],
                  events_by_relay: Mapping[str, Sequence[Event]]) -> Dataset:
    """Assemble a validated Dataset from relay records and per-relay event lists.

    Events are deduplicated by id across relays (first occurrence in sorted
    relay order wins); relays with zero events are dropped.
    """
    records = {r.relay_id: r for r in relay_records}
    unknown_dumps = sorted(set(events_by_relay) - set(records))
    if unknown_dumps:
        raise AssemblyError(f"event dumps for relays missing from the relay table: {unknown_dumps}")

    kept = tuple(sorted((records[rid] for rid in events_by_relay if events_by_relay[rid]),
                        key=lambda r: r.relay_id))
    known = {r.relay_id for r in kept}

    by_id: dict[str, Event] = {}
    locations: dict[str, set[str]] = {}
    for rid in sorted(events_by_relay):
        for ev in events_by_relay[rid]:
            if ev.id not in by_id:
                by_id[ev.id] = ev
            locations.setdefault(ev.id, set()).add(rid)

    events = [by_id[i] for i in sorted(by_id)]
    replica_map = build_replica_map(events, locations, known_relays=known)
    graph = build_follower_graph(ev for ev in events if ev.kind == CONTACT_KIND)
    user_relays = derive_user_relays(replica_map)
    ds = Dataset(relays=kept, replica_map=replica_map,
                 follower_graph=graph, user_relays=user_relays)
    ds.validate()
    return ds
