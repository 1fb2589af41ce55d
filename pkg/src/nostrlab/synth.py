"""Seeded synthetic dataset generator.

Produces datasets in memory (``generate``) or as ingest-format files
(``generate_files``) so every analysis and the full file pipeline can be
exercised at desk scale. Identical seeds give bit-identical datasets.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import ingest, model
from .model import CONTACT_KIND, POST_KIND, Dataset, Event, RelayRecord

_CREATED_AT_BASE = 1_700_000_000


class ConfigError(ValueError):
    """Invalid or infeasible generator configuration."""


def _zipf_pmf(s: float, kmax: int) -> np.ndarray:
    ks = np.arange(1, kmax + 1, dtype=float)
    w = ks ** -float(s)
    return w / w.sum()


@dataclass(frozen=True)
class ReplicationSpec:
    """Per-post replica count distribution: constant ("uniform") or truncated zipf."""

    kind: str  # "uniform" | "zipf"
    k: Optional[int] = None
    s: Optional[float] = None
    max: Optional[int] = None

    @classmethod
    def uniform(cls, k: int) -> "ReplicationSpec":
        return cls(kind="uniform", k=k)

    @classmethod
    def zipf(cls, s: float, max: int) -> "ReplicationSpec":
        return cls(kind="zipf", s=s, max=max)

    def validate(self, n_relays: int) -> None:
        if self.kind == "uniform":
            if self.k is None or self.k < 1:
                raise ConfigError(f"uniform replication needs k >= 1, got {self.k}")
            if self.k > n_relays:
                raise ConfigError(f"replication k={self.k} exceeds n_relays={n_relays}")
        elif self.kind == "zipf":
            if self.s is None or self.s <= 0:
                raise ConfigError(f"zipf replication needs s > 0, got {self.s}")
            if self.max is None or self.max < 1:
                raise ConfigError(f"zipf replication needs max >= 1, got {self.max}")
            if self.max > n_relays:
                raise ConfigError(f"replication max={self.max} exceeds n_relays={n_relays}")
        else:
            raise ConfigError(f"unknown replication kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "uniform":
            return np.full(n, self.k, dtype=int)
        return rng.choice(np.arange(1, self.max + 1), size=n, p=_zipf_pmf(self.s, self.max))


@dataclass(frozen=True)
class DegreeSpec:
    """Follower out-degree distribution: fixed, uniform integer range, or zipf."""

    kind: str  # "fixed" | "uniform" | "zipf"
    k: Optional[int] = None
    low: Optional[int] = None
    high: Optional[int] = None
    s: Optional[float] = None
    max: Optional[int] = None

    @classmethod
    def fixed(cls, k: int) -> "DegreeSpec":
        return cls(kind="fixed", k=k)

    @classmethod
    def uniform(cls, low: int, high: int) -> "DegreeSpec":
        return cls(kind="uniform", low=low, high=high)

    @classmethod
    def zipf(cls, s: float, max: int) -> "DegreeSpec":
        return cls(kind="zipf", s=s, max=max)

    def validate(self) -> None:
        if self.kind == "fixed":
            if self.k is None or self.k < 0:
                raise ConfigError(f"fixed degree needs k >= 0, got {self.k}")
        elif self.kind == "uniform":
            if self.low is None or self.high is None or not 0 <= self.low <= self.high:
                raise ConfigError(f"uniform degree needs 0 <= low <= high, got {self.low}..{self.high}")
        elif self.kind == "zipf":
            if self.s is None or self.s <= 0 or self.max is None or self.max < 1:
                raise ConfigError(f"zipf degree needs s > 0 and max >= 1, got s={self.s} max={self.max}")
        else:
            raise ConfigError(f"unknown degree kind {self.kind!r}")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "fixed":
            return np.full(n, self.k, dtype=int)
        if self.kind == "uniform":
            return rng.integers(self.low, self.high + 1, size=n)
        return rng.choice(np.arange(1, self.max + 1), size=n, p=_zipf_pmf(self.s, self.max))


@dataclass(frozen=True)
class SynthConfig:
    n_relays: int
    n_ases: int
    n_countries: int
    n_users: int
    n_posts: int
    rng_seed: int
    replication: ReplicationSpec = field(default_factory=lambda: ReplicationSpec.uniform(3))
    relay_popularity_skew: float = 1.0
    follow_out_degree: DegreeSpec = field(default_factory=lambda: DegreeSpec.uniform(1, 8))
    as_skew: float = 1.0
    country_skew: float = 1.0

    def validate(self) -> None:
        for name in ("n_relays", "n_ases", "n_countries", "n_users", "n_posts"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_ases > self.n_relays:
            raise ConfigError(f"n_ases={self.n_ases} exceeds n_relays={self.n_relays}")
        if self.n_countries > 26 * 26:
            raise ConfigError("n_countries exceeds the two-letter code space")
        self.replication.validate(self.n_relays)
        self.follow_out_degree.validate()


def config_from_dict(raw: dict) -> SynthConfig:
    """Build a validated SynthConfig from a parsed TOML/JSON mapping."""
    try:
        rep_raw = dict(raw.get("replication", {"kind": "uniform", "k": 3}))
        deg_raw = dict(raw.get("follow_out_degree", {"kind": "uniform", "low": 1, "high": 8}))
        cfg = SynthConfig(
            n_relays=int(raw["n_relays"]),
            n_ases=int(raw["n_ases"]),
            n_countries=int(raw["n_countries"]),
            n_users=int(raw["n_users"]),
            n_posts=int(raw["n_posts"]),
            rng_seed=int(raw["rng_seed"]),
            replication=ReplicationSpec(
                kind=str(rep_raw.get("kind", "uniform")),
                k=int(rep_raw["k"]) if "k" in rep_raw else None,
                s=float(rep_raw["s"]) if "s" in rep_raw else None,
                max=int(rep_raw["max"]) if "max" in rep_raw else None,
            ),
            relay_popularity_skew=float(raw.get("relay_popularity_skew", 1.0)),
            follow_out_degree=DegreeSpec(
                kind=str(deg_raw.get("kind", "uniform")),
                k=int(deg_raw["k"]) if "k" in deg_raw else None,
                low=int(deg_raw["low"]) if "low" in deg_raw else None,
                high=int(deg_raw["high"]) if "high" in deg_raw else None,
                s=float(deg_raw["s"]) if "s" in deg_raw else None,
                max=int(deg_raw["max"]) if "max" in deg_raw else None,
            ),
            as_skew=float(raw.get("as_skew", 1.0)),
            country_skew=float(raw.get("country_skew", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad generator config: {exc}") from exc
    cfg.validate()
    return cfg


def load_config(path: Path | str) -> SynthConfig:
    """Load a generator config from a .toml or .json file."""
    path = Path(path)
    try:
        if path.suffix == ".json":
            raw = json.loads(path.read_text(encoding="utf-8"))
        else:
            with path.open("rb") as fh:
                raw = tomllib.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must hold a table/object at the top level")
    return config_from_dict(raw)


def _hex_id(seed: int, label: str, i: int) -> str:
    return hashlib.sha256(f"{seed}:{label}:{i}".encode()).hexdigest()


def _country_codes(n: int) -> list[str]:
    return [chr(65 + i // 26) + chr(65 + i % 26) for i in range(n)]


class _World:
    """Intermediate product shared by generate() and generate_files()."""

    def __init__(self, records: list[RelayRecord], events_by_relay: dict[str, list[Event]],
                 as_entries: list[ingest.AsMapEntry]):
        self.records = records
        self.events_by_relay = events_by_relay
        self.as_entries = as_entries


def _generate_world(config: SynthConfig) -> _World:
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    n_r, n_u = config.n_relays, config.n_users

    relay_ids = [f"r{i:04d}" for i in range(n_r)]
    hosts = [f"{rid}.synthetic.example" for rid in relay_ids]

    # First n_ases relays pin one relay per AS so the configured count is
    # always realized; the rest follow the skewed multinomial.
    as_numbers = list(range(1, config.n_ases + 1))
    as_assign = as_numbers + list(rng.choice(
        as_numbers, size=n_r - config.n_ases, p=_zipf_pmf(config.as_skew, config.n_ases)))
    countries = _country_codes(config.n_countries)
    country_assign = list(rng.choice(
        countries, size=n_r, p=_zipf_pmf(config.country_skew, config.n_countries)))

    records = [RelayRecord(relay_id=relay_ids[i], url=f"wss://{hosts[i]}",
                           asn=int(as_assign[i]), country=country_assign[i], paid=False)
               for i in range(n_r)]
    as_entries = [ingest.AsMapEntry(host=hosts[i], asn=int(as_assign[i]), country=country_assign[i])
                  for i in range(n_r)]

    # Heavy-tailed relay popularity over a random permutation of relays.
    order = rng.permutation(n_r)
    popularity = np.empty(n_r)
    popularity[order] = _zipf_pmf(config.relay_popularity_skew, n_r)

    pubkeys = [_hex_id(config.rng_seed, "user", i) for i in range(n_u)]
    authors = rng.integers(0, n_u, size=config.n_posts)
    replica_counts = config.replication.sample(rng, config.n_posts)
    pads = rng.integers(0, 240, size=config.n_posts)

    events_by_relay: dict[str, list[Event]] = {rid: [] for rid in relay_ids}
    for i in range(config.n_posts):
        m = int(replica_counts[i])
        where = rng.choice(n_r, size=m, replace=False, p=popularity)
        content = f"synthetic post {i} " + "x" * int(pads[i])
        ev = model.make_event(pubkey=pubkeys[int(authors[i])],
                              created_at=_CREATED_AT_BASE + i,
                              kind=POST_KIND, tags=(), content=content)
        for r in where:
            events_by_relay[relay_ids[int(r)]].append(ev)

    degrees = config.follow_out_degree.sample(rng, n_u)
    contact_relays = rng.integers(0, n_r, size=n_u)
    for u in range(n_u):
        d = min(int(degrees[u]), n_u - 1)
        if d <= 0:
            continue
        others = np.delete(np.arange(n_u), u)
        followees = rng.choice(others, size=d, replace=False)
        tags = [["p", pubkeys[int(v)]] for v in sorted(followees)]
        ev = model.make_event(pubkey=pubkeys[u],
                              created_at=_CREATED_AT_BASE + config.n_posts + u,
                              kind=CONTACT_KIND, tags=tags, content="")
        events_by_relay[relay_ids[int(contact_relays[u])]].append(ev)

    return _World(records, events_by_relay, as_entries)


def generate(config: SynthConfig) -> Dataset:
    """Generate a validated synthetic Dataset in memory."""
    world = _generate_world(config)
    return model.build_dataset(world.records, world.events_by_relay)


def generate_files(config: SynthConfig, out_dir: Path | str) -> Dataset:
    """Generate and write the dataset in ingest formats; returns the Dataset.

    Layout under out_dir: dumps/<relay_id> (JSONL, relays with no events get
    no file), relays.csv, as_map.csv.
    """
    world = _generate_world(config)
    out_dir = Path(out_dir)
    dump_dir = out_dir / "dumps"
    dump_dir.mkdir(parents=True, exist_ok=True)
    for rid in sorted(world.events_by_relay):
        events = world.events_by_relay[rid]
        if not events:
            continue
        events = sorted(events, key=lambda e: (e.created_at, e.id))
        ingest.write_event_dump(dump_dir / rid, events)
    ingest.write_relay_table(out_dir / "relays.csv",
                             [(r.relay_id, r.url, r.paid) for r in world.records])
    ingest.write_as_map(out_dir / "as_map.csv", world.as_entries)
    return model.build_dataset(world.records, world.events_by_relay)
