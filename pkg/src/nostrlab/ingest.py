"""Parse event dumps, relay info documents and AS map files into a Dataset.

File formats (all UTF-8, LF line endings):
  - event dump: JSONL, one NIP-01 event object per line, one file per relay,
    filename = relay_id
  - AS map: CSV ``host,asn,country``
  - relay table: CSV ``relay_id,url,paid``
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional
from urllib.parse import urlparse

from . import model
from .model import Dataset, Event, RelayRecord

logger = logging.getLogger(__name__)


class ParseError(ValueError):
    """A malformed input line or document; message carries file/line context."""


@dataclass(frozen=True)
class RelayInfoDoc:
    """Relevant fields of a NIP-11 relay information document."""

    name: Optional[str] = None
    pubkey: Optional[str] = None
    contact: Optional[str] = None
    payment_required: bool = False
    admission_fee_msats: Optional[int] = None
    supported_nips: tuple[int, ...] = ()

    @property
    def is_paid(self) -> bool:
        # Fee wins: a listed admission fee marks the relay paid even when the
        # limitation block says payment_required=false.
        return self.payment_required or self.admission_fee_msats is not None


@dataclass(frozen=True)
class AsMapEntry:
    host: str
    asn: int
    country: str


def parse_event_line(line: str, *, verify_id: bool = False,
                     verify_signature: Optional[Callable[[Event], bool]] = None) -> Optional[Event]:
    """Parse one JSONL dump line into an Event; blank lines return None.

    size_bytes is the raw line's UTF-8 byte length. With verify_id the
    canonical hash is recomputed and mismatches raise ParseError; the optional
    verify_signature hook (disabled by default) may veto the event likewise.
    """
    stripped = line.strip()
    if not stripped:
        return None
    try:
        obj = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"expected a JSON object, got {type(obj).__name__}")
    missing = [f for f in model.EVENT_FIELDS if f not in obj]
    if missing:
        raise ParseError(f"missing fields: {missing}")
    try:
        tags = tuple(tuple(str(x) for x in tag) for tag in obj["tags"])
        ev = Event(
            id=str(obj["id"]),
            pubkey=str(obj["pubkey"]),
            created_at=int(obj["created_at"]),
            kind=int(obj["kind"]),
            tags=tags,
            content=str(obj["content"]),
            sig=str(obj["sig"]),
            size_bytes=len(stripped.encode("utf-8")),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed field: {exc}") from exc
    try:
        model.validate_event(ev)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    if verify_id:
        recomputed = model.event_id(ev.pubkey, ev.created_at, ev.kind, ev.tags, ev.content)
        if recomputed != ev.id:
            raise ParseError(f"event id {ev.id} does not match recomputed identity {recomputed}")
    if verify_signature is not None and not verify_signature(ev):
        raise ParseError(f"signature verification failed for event {ev.id}")
    return ev


def load_event_dump(path: Path | str, *, verify_id: bool = False,
                    verify_signature: Optional[Callable[[Event], bool]] = None,
                    on_error: str = "raise") -> tuple[list[Event], int]:
    """Read a dump file; returns (events, skipped_line_count).

    on_error="skip" counts bad lines instead of raising.
    """
    if on_error not in ("raise", "skip"):
        raise ValueError(f"on_error must be 'raise' or 'skip', got {on_error!r}")
    events, skipped = [], 0
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                ev = parse_event_line(line, verify_id=verify_id, verify_signature=verify_signature)
            except ParseError as exc:
                if on_error == "raise":
                    raise ParseError(f"{path}:{lineno}: {exc}") from exc
                skipped += 1
                continue
            if ev is not None:
                events.append(ev)
    if skipped:
        logger.warning("skipped %d malformed lines in %s", skipped, path)
    return events, skipped


def write_event_dump(path: Path | str, events: Iterable[Event]) -> None:
    """Write events as canonical compact JSONL, NIP-01 field order."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for ev in events:
            fh.write(ev.to_wire_json())
            fh.write("\n")


def parse_relay_info(text: str) -> RelayInfoDoc:
    """Parse a NIP-11 relay information document (JSON object)."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"relay info is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"relay info must be a JSON object, got {type(obj).__name__}")

    limitation = obj.get("limitation") or {}
    payment_required = bool(limitation.get("payment_required", False))

    fee = None
    fees = obj.get("fees") or {}
    for entry in fees.get("admission", []) or []:
        if isinstance(entry, dict) and "amount" in entry:
            try:
                fee = int(entry["amount"])
            except (TypeError, ValueError):
                continue
            break

    nips = []
    for n in obj.get("supported_nips", []) or []:
        try:
            nips.append(int(n))
        except (TypeError, ValueError):
            continue

    return RelayInfoDoc(
        name=obj.get("name"),
        pubkey=obj.get("pubkey"),
        contact=obj.get("contact"),
        payment_required=payment_required,
        admission_fee_msats=fee,
        supported_nips=tuple(nips),
    )


def load_as_map(path: Path | str) -> dict[str, AsMapEntry]:
    """Load the ``host,asn,country`` CSV; duplicate hosts last-wins with a warning."""
    path = Path(path)
    out: dict[str, AsMapEntry] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"host", "asn", "country"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise ParseError(f"{path}: expected header host,asn,country, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            host = (row["host"] or "").strip()
            if not host:
                raise ParseError(f"{path}:{lineno}: empty host")
            try:
                asn = int(row["asn"])
            except (TypeError, ValueError):
                raise ParseError(f"{path}:{lineno}: malformed ASN {row['asn']!r}") from None
            if asn <= 0:
                raise ParseError(f"{path}:{lineno}: ASN must be positive, got {asn}")
            if host in out:
                logger.warning("%s:%d: duplicate host %s, last entry wins", path, lineno, host)
            out[host] = AsMapEntry(host=host, asn=asn, country=(row["country"] or "").strip())
    return out


def load_relay_table(path: Path | str) -> list[tuple[str, str, bool]]:
    """Load the ``relay_id,url,paid`` CSV."""
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"relay_id", "url", "paid"}
        if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
            raise ParseError(f"{path}: expected header relay_id,url,paid, got {reader.fieldnames}")
        for lineno, row in enumerate(reader, start=2):
            rid = (row["relay_id"] or "").strip()
            if not rid:
                raise ParseError(f"{path}:{lineno}: empty relay_id")
            paid_raw = (row["paid"] or "").strip().lower()
            if paid_raw not in ("true", "false", "1", "0", ""):
                raise ParseError(f"{path}:{lineno}: paid must be true/false, got {row['paid']!r}")
            rows.append((rid, (row["url"] or "").strip(), paid_raw in ("true", "1")))
    return rows


def write_relay_table(path: Path | str, rows: Iterable[tuple[str, str, bool]]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["relay_id", "url", "paid"])
        for rid, url, paid in sorted(rows):
            writer.writerow([rid, url, "true" if paid else "false"])


def write_as_map(path: Path | str, entries: Iterable[AsMapEntry]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["host", "asn", "country"])
        for e in sorted(entries, key=lambda e: e.host):
            writer.writerow([e.host, e.asn, e.country])


def host_of_url(url: str) -> str:
    """Hostname used to look relays up in the AS map."""
    parsed = urlparse(url)
    return parsed.hostname or url


def make_relay_records(relay_table: Iterable[tuple[str, str, bool]],
                       as_map: Mapping[str, AsMapEntry]) -> list[RelayRecord]:
    """Attach AS/country attribution; hosts absent from the map stay unknown."""
    records = []
    for rid, url, paid in relay_table:
        entry = as_map.get(host_of_url(url)) if url else None
        if entry is None:
            entry = as_map.get(rid)  # allow keying the map by relay_id directly
        records.append(RelayRecord(
            relay_id=rid,
            url=url,
            asn=entry.asn if entry else None,
            country=(entry.country or None) if entry else None,
            paid=paid,
        ))
    return records


def discover_dumps(dump_dir: Path | str) -> dict[str, Path]:
    """Map relay_id -> dump path for every regular file in the directory."""
    dump_dir = Path(dump_dir)
    if not dump_dir.is_dir():
        raise FileNotFoundError(f"dump directory not found: {dump_dir}")
    return {p.name: p for p in sorted(dump_dir.iterdir()) if p.is_file()}


def assemble_dataset(dumps: Mapping[str, Path | str],
                     relay_table: Iterable[tuple[str, str, bool]],
                     as_map: Mapping[str, AsMapEntry],
                     *, verify_id: bool = False,
                     verify_signature: Optional[Callable[[Event], bool]] = None,
                     on_error: str = "raise") -> Dataset:
    """Parse all dumps and build a validated Dataset.

    ``dumps`` maps relay_id -> dump file path; every relay_id must appear in
    the relay table. Cross-reference failures are aggregated in the error.
    """
    records = make_relay_records(relay_table, as_map)
    events_by_relay = {}
    for rid in sorted(dumps):
        events, _ = load_event_dump(dumps[rid], verify_id=verify_id,
                                    verify_signature=verify_signature, on_error=on_error)
        events_by_relay[rid] = events
    return model.build_dataset(records, events_by_relay)


def assemble_from_dir(dump_dir: Path | str, relay_table_path: Path | str,
                      as_map_path: Path | str, **kwargs) -> Dataset:
    """Convenience wrapper: directory of dumps + relay table CSV + AS map CSV."""
    return assemble_dataset(
        discover_dumps(dump_dir),
        load_relay_table(relay_table_path),
        load_as_map(as_map_path),
        **kwargs,
    )
