"""Minimal protocol-faithful Nostr client: relay info, windowed crawls, probes.

Wire protocol: JSON arrays over a single WebSocket connection per relay —
["REQ", sub_id, filter...] / ["CLOSE", sub_id] from the client, and
["EVENT", sub_id, event] / ["EOSE", sub_id] / ["NOTICE", text] from the
relay. Relay info documents are fetched over HTTP with the
``application/nostr+json`` accept header.

Crawls are strictly serial per relay (one subscription at a time, CLOSE
before disconnect) and concurrent only across relays, bounded by ``jobs``.
"""

from __future__ import annotations

import asyncio
import csv
import json
import logging
import socket
import ssl
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import requests
import websockets
from websockets.exceptions import ConnectionClosed, InvalidHandshake, InvalidURI

from . import ingest
from .ingest import ParseError, RelayInfoDoc
from .model import Event

logger = logging.getLogger(__name__)

DEFAULT_CONNECT_TIMEOUT = 10.0
DEFAULT_EOSE_TIMEOUT = 30.0
DEFAULT_PAGE_LIMIT = 500
MAX_PAGES = 10_000


class CrawlError(Exception):
    """Base for network-level failures."""


class ProtocolError(CrawlError):
    """The relay sent something outside the wire grammar."""


class RelayInfoError(CrawlError):
    """Base for relay-info fetch failures."""


class RelayInfoTimeout(RelayInfoError):
    pass


class RelayInfoHttpError(RelayInfoError):
    def __init__(self, status: int, url: str):
        super().__init__(f"HTTP {status} from {url}")
        self.status = status


class RelayInfoFormatError(RelayInfoError):
    pass


@dataclass(frozen=True)
class Filter:
    """Subscription filter; absent fields are omitted from the wire form."""

    kinds: Optional[tuple[int, ...]] = None
    authors: Optional[tuple[str, ...]] = None
    since: Optional[int] = None
    until: Optional[int] = None
    limit: Optional[int] = None

    def __post_init__(self):
        if self.since is not None and self.until is not None and self.since > self.until:
            raise ValueError(f"since={self.since} must not exceed until={self.until}")
        if self.limit is not None and self.limit < 1:
            raise ValueError(f"limit must be positive, got {self.limit}")

    def to_dict(self) -> dict:
        out: dict = {}
        if self.kinds is not None:
            out["kinds"] = list(self.kinds)
        if self.authors is not None:
            out["authors"] = list(self.authors)
        if self.since is not None:
            out["since"] = self.since
        if self.until is not None:
            out["until"] = self.until
        if self.limit is not None:
            out["limit"] = self.limit
        return out

    def matches(self, event: Event) -> bool:
        """NIP-01 filter semantics (since/until inclusive, authors by prefix)."""
        if self.kinds is not None and event.kind not in self.kinds:
            return False
        if self.authors is not None and not any(event.pubkey.startswith(a) for a in self.authors):
            return False
        if self.since is not None and event.created_at < self.since:
            return False
        if self.until is not None and event.created_at > self.until:
            return False
        return True


def req_message(sub_id: str, *filters: Filter) -> str:
    return json.dumps(["REQ", sub_id, *(f.to_dict() for f in filters)],
                      separators=(",", ":"), ensure_ascii=False)


def close_message(sub_id: str) -> str:
    return json.dumps(["CLOSE", sub_id], separators=(",", ":"))


def parse_relay_message(raw: str) -> tuple:
    """Parse a relay -> client message into ("EVENT", sub, dict) / ("EOSE", sub) / ("NOTICE", text)."""
    try:
        arr = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"relay message is not JSON: {exc}") from exc
    if not isinstance(arr, list) or not arr or not isinstance(arr[0], str):
        raise ProtocolError(f"relay message is not a tagged array: {raw[:80]!r}")
    verb = arr[0]
    if verb == "EVENT":
        if len(arr) != 3 or not isinstance(arr[1], str) or not isinstance(arr[2], dict):
            raise ProtocolError(f"malformed EVENT message: {raw[:80]!r}")
        return ("EVENT", arr[1], arr[2])
    if verb == "EOSE":
        if len(arr) != 2 or not isinstance(arr[1], str):
            raise ProtocolError(f"malformed EOSE message: {raw[:80]!r}")
        return ("EOSE", arr[1])
    if verb == "NOTICE":
        if len(arr) != 2 or not isinstance(arr[1], str):
            raise ProtocolError(f"malformed NOTICE message: {raw[:80]!r}")
        return ("NOTICE", arr[1])
    raise ProtocolError(f"unknown relay message verb {verb!r}")


def _http_url(url: str) -> str:
    if url.startswith("wss://"):
        return "https://" + url[len("wss://"):]
    if url.startswith("ws://"):
        return "http://" + url[len("ws://"):]
    return url


def fetch_relay_info(url: str, timeout_s: float = DEFAULT_CONNECT_TIMEOUT) -> RelayInfoDoc:
    """Fetch and parse the relay's NIP-11 information document."""
    target = _http_url(url)
    try:
        resp = requests.get(target, headers={"Accept": "application/nostr+json"},
                            timeout=timeout_s)
    except requests.Timeout as exc:
        raise RelayInfoTimeout(f"timed out after {timeout_s}s fetching {target}") from exc
    except requests.RequestException as exc:
        raise RelayInfoError(f"cannot fetch {target}: {exc}") from exc
    if resp.status_code != 200:
        raise RelayInfoHttpError(resp.status_code, target)
    try:
        return ingest.parse_relay_info(resp.text)
    except ParseError as exc:
        raise RelayInfoFormatError(f"{target}: {exc}") from exc


@dataclass(frozen=True)
class ProbeResult:
    url: str
    reachable: bool
    rtt_ms: Optional[float] = None
    reason: Optional[str] = None


async def _probe_async(url: str, timeout_s: float) -> ProbeResult:
    t0 = time.perf_counter()
    try:
        ws = await websockets.connect(url, open_timeout=timeout_s)
    except ssl.SSLError:
        return ProbeResult(url=url, reachable=False, reason="tls")
    except (asyncio.TimeoutError, TimeoutError):
        return ProbeResult(url=url, reachable=False, reason="timeout")
    except ConnectionRefusedError:
        return ProbeResult(url=url, reachable=False, reason="refused")
    except socket.gaierror:
        return ProbeResult(url=url, reachable=False, reason="dns")
    except (InvalidHandshake, InvalidURI):
        return ProbeResult(url=url, reachable=False, reason="handshake")
    except OSError as exc:
        reason = "tls" if isinstance(exc.__cause__, ssl.SSLError) else "error"
        return ProbeResult(url=url, reachable=False, reason=reason)
    rtt_ms = (time.perf_counter() - t0) * 1000.0
    await ws.close()
    return ProbeResult(url=url, reachable=True, rtt_ms=rtt_ms)


def probe(url: str, timeout_s: float = DEFAULT_CONNECT_TIMEOUT) -> ProbeResult:
    """Attempt a WebSocket handshake; failures are returned, never raised."""
    return asyncio.run(_probe_async(url, timeout_s))


def probe_many(urls: Sequence[str], timeout_s: float = DEFAULT_CONNECT_TIMEOUT,
               jobs: int = 4) -> list[ProbeResult]:
    async def run():
        sem = asyncio.Semaphore(max(1, jobs))

        async def one(u):
            async with sem:
                return await _probe_async(u, timeout_s)

        return await asyncio.gather(*(one(u) for u in urls))

    return list(asyncio.run(run()))


@dataclass
class CrawlRelayResult:
    relay_id: str
    url: str
    ok: bool
    events: int = 0
    pages: int = 0
    eose_ms: list[float] = field(default_factory=list)
    tie_truncations: int = 0
    protocol_warnings: int = 0
    error: Optional[str] = None

    @property
    def mean_eose_ms(self) -> float:
        return sum(self.eose_ms) / len(self.eose_ms) if self.eose_ms else 0.0


@dataclass
class CrawlReport:
    since: int
    until: int
    kinds: tuple[int, ...]
    results: list[CrawlRelayResult]

    def ok_count(self) -> int:
        return sum(1 for r in self.results if r.ok)

    def failed_count(self) -> int:
        return sum(1 for r in self.results if not r.ok)


def write_crawl_report_csv(report: CrawlReport, path: Path | str) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["relay_id", "url", "ok", "events", "pages", "mean_eose_ms",
                    "tie_truncations", "error"])
        for r in sorted(report.results, key=lambda r: r.relay_id):
            w.writerow([r.relay_id, r.url, "true" if r.ok else "false", r.events,
                        r.pages, f"{r.mean_eose_ms:.1f}", r.tie_truncations, r.error or ""])


def write_probe_csv(results: Sequence[ProbeResult], path: Path | str) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["url", "reachable", "rtt_ms", "reason"])
        for r in results:
            w.writerow([r.url, "true" if r.reachable else "false",
                        f"{r.rtt_ms:.1f}" if r.rtt_ms is not None else "", r.reason or ""])


async def _recv_until_eose(ws, sub_id: str, eose_timeout: float,
                           result: CrawlRelayResult) -> tuple[list[Event], float]:
    """Collect EVENTs for one subscription until its EOSE; returns (events, eose_ms)."""
    t0 = time.perf_counter()
    batch: list[Event] = []
    while True:
        raw = await asyncio.wait_for(ws.recv(), timeout=eose_timeout)
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        msg = parse_relay_message(raw)
        if msg[0] == "EVENT":
            if msg[1] != sub_id:
                # Stale delivery from a closed subscription; tolerated but counted.
                result.protocol_warnings += 1
                continue
            line = json.dumps(msg[2], separators=(",", ":"), ensure_ascii=False)
            ev = ingest.parse_event_line(line)
            if ev is not None:
                batch.append(ev)
        elif msg[0] == "EOSE":
            if msg[1] != sub_id:
                result.protocol_warnings += 1
                continue
            return batch, (time.perf_counter() - t0) * 1000.0
        else:  # NOTICE
            logger.info("relay %s notice: %s", result.relay_id, msg[1])


async def _crawl_relay(relay_id: str, url: str, since: int, until: int,
                       kinds: tuple[int, ...], out_dir: Path, page_limit: int,
                       connect_timeout: float, eose_timeout: float,
                       max_pages: int) -> CrawlRelayResult:
    """One relay: single connection, serial paginated REQs, dump written on success.

    Pagination walks ``until`` down to the oldest seen timestamp (inclusive,
    duplicates dropped by id). A full page of already-seen events means more
    同-timestamp events than the relay returns; ``until`` is decremented with a
    tie-truncation warning.
    """
    result = CrawlRelayResult(relay_id=relay_id, url=url, ok=False)
    seen: dict[str, Event] = {}
    try:
        async with websockets.connect(url, open_timeout=connect_timeout) as ws:
            until_cur = until
            for page in range(max_pages):
                if until_cur < since:
                    break
                sub_id = f"crawl-{page}"
                flt = Filter(kinds=kinds, since=since, until=until_cur, limit=page_limit)
                await ws.send(req_message(sub_id, flt))
                try:
                    batch, eose_ms = await _recv_until_eose(ws, sub_id, eose_timeout, result)
                finally:
                    try:
                        await ws.send(close_message(sub_id))
                    except ConnectionClosed:
                        pass
                result.pages += 1
                result.eose_ms.append(eose_ms)
                if not batch:
                    break
                new = [e for e in batch if e.id not in seen]
                for e in new:
                    seen[e.id] = e
                oldest = min(e.created_at for e in batch)
                if oldest < until_cur:
                    until_cur = oldest
                elif not new:
                    result.tie_truncations += 1
                    until_cur = oldest - 1
                # else: full boundary-timestamp page with fresh events; the next
                # request repeats it and the branch above advances past it.
        result.ok = True
        result.events = len(seen)
        ordered = sorted(seen.values(), key=lambda e: (e.created_at, e.id))
        ingest.write_event_dump(out_dir / relay_id, ordered)
    except (OSError, asyncio.TimeoutError, TimeoutError, ConnectionClosed,
            InvalidHandshake, InvalidURI, ProtocolError, ParseError) as exc:
        result.error = f"{type(exc).__name__}: {exc}"
    return result


async def _crawl_window_async(relays: Sequence[tuple[str, str]], since: int, until: int,
                              kinds: tuple[int, ...], out_dir: Path, page_limit: int,
                              jobs: int, connect_timeout: float, eose_timeout: float,
                              max_pages: int) -> CrawlReport:
    sem = asyncio.Semaphore(max(1, jobs))

    async def one(rid, url):
        async with sem:
            return await _crawl_relay(rid, url, since, until, kinds, out_dir,
                                      page_limit, connect_timeout, eose_timeout, max_pages)

    results = await asyncio.gather(*(one(rid, url) for rid, url in relays))
    return CrawlReport(since=since, until=until, kinds=tuple(kinds), results=list(results))


def crawl_window(relays: Sequence[tuple[str, str]], since: int, until: int,
                 kinds: Sequence[int], out_dir: Path | str, *,
                 page_limit: int = DEFAULT_PAGE_LIMIT, jobs: int = 4,
                 connect_timeout: float = DEFAULT_CONNECT_TIMEOUT,
                 eose_timeout: float = DEFAULT_EOSE_TIMEOUT,
                 max_pages: int = MAX_PAGES) -> CrawlReport:
    """Crawl a time window from (relay_id, url) pairs, writing one dump per live relay.

    Individual relay failures are recorded in the report and never abort the
    crawl. Dumps re-ingest cleanly through :mod:`nostrlab.ingest`.
    """
    if since > until:
        raise ValueError(f"since={since} must not exceed until={until}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return asyncio.run(_crawl_window_async(relays, since, until, tuple(kinds), out_dir,
                                           page_limit, jobs, connect_timeout,
                                           eose_timeout, max_pages))
