"""Zone file parsing, day-over-day zone diffs and blacklist feed ingestion.

Zone files are reduced to the set of registered (second-level) domains that
own NS records; everything else in the file is counted and ignored.
"""
from __future__ import annotations

import csv
import datetime as dt
import ipaddress
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, TextIO

import numpy as np

from .errors import (
    DateOrder,
    EmptyRange,
    EmptyZone,
    InvalidDomain,
    MissingColumns,
    TldMismatch,
    ZoneSyntaxError,
)
from .forecasting.series import TimeSeries

logger = logging.getLogger(__name__)

_LABEL_RE = re.compile(r"^[a-z0-9](?:[a-z0-9-]*[a-z0-9])?$")

RR_TYPES = {
    "a", "aaaa", "cname", "dnskey", "ds", "mx", "ns", "nsec", "nsec3",
    "nsec3param", "ptr", "rrsig", "soa", "srv", "txt", "caa",
}
RR_CLASSES = {"in", "ch", "hs", "cs"}


@dataclass(frozen=True, order=True)
class DomainName:
    """A normalized domain name.

    ``labels`` runs most-specific first, so ``labels[-1]`` is the TLD and
    ``labels[-2]`` the registered second-level label.
    """

    raw: str
    labels: tuple = field(compare=False, repr=False)

    @classmethod
    def parse(cls, text: str) -> "DomainName":
        raw = text.strip().lower().rstrip(".")
        labels = tuple(raw.split(".")) if raw else ()
        if len(labels) < 2:
            raise InvalidDomain(f"not a registrable domain name: {text!r}")
        for label in labels:
            if not _LABEL_RE.match(label):
                raise InvalidDomain(f"invalid label {label!r} in {text!r}")
        return cls(raw, labels)

    @property
    def top_level(self) -> str:
        return self.labels[-1]

    @property
    def second_level(self) -> str:
        return self.labels[-2]

    @property
    def third_level(self) -> Optional[str]:
        return self.labels[-3] if len(self.labels) >= 3 else None

    @property
    def registered(self) -> "DomainName":
        """The second-level + top-level part, i.e. the unit that gets registered."""
        if len(self.labels) == 2:
            return self
        return DomainName(".".join(self.labels[-2:]), self.labels[-2:])

    def __str__(self) -> str:
        return self.raw


@dataclass(frozen=True)
class ZoneSnapshot:
    date: dt.date
    tld: str
    domains: frozenset
    record_count: int
    skipped_count: int = 0

    def __post_init__(self):
        for d in self.domains:
            if d.top_level != self.tld:
                raise TldMismatch(f"{d} is not under .{self.tld}")


@dataclass(frozen=True)
class ZoneDiff:
    from_date: dt.date
    to_date: dt.date
    added: frozenset
    removed: frozenset

    def summary(self) -> dict:
        return {
            "from_date": self.from_date.isoformat(),
            "to_date": self.to_date.isoformat(),
            "added_count": len(self.added),
            "removed_count": len(self.removed),
        }


@dataclass(frozen=True)
class BlacklistEntry:
    domain: DomainName
    first_seen: dt.date
    malware_family: str
    source: str

    def __post_init__(self):
        if not self.malware_family.strip():
            raise ValueError("malware_family must be non-empty")


@dataclass
class FeedParse:
    """Entries from one feed plus the rows that were rejected, as (line, reason)."""

    entries: list
    skipped: list = field(default_factory=list)


def _normalize_tld(tld: str) -> str:
    return tld.strip().lower().strip(".")


def parse_zone_file(stream: Iterable[str], tld: str, date: Optional[dt.date] = None) -> ZoneSnapshot:
    """Reduce a master-file style zone listing to its delegated second-level domains.

    Only NS records contribute. ``$ORIGIN`` is honoured, ``$TTL`` and other
    directives are ignored, parenthesized continuations raise
    :class:`ZoneSyntaxError`. Owners deeper than the second level are folded
    onto their registered domain.
    """
    tld = _normalize_tld(tld)
    origin = tld
    prev_owner = None
    domains = set()
    ns_records = 0
    skipped = 0
    for lineno, line in enumerate(stream, 1):
        body = line.split(";", 1)[0].rstrip("\r\n")
        if not body.strip():
            continue
        if "(" in body or ")" in body:
            raise ZoneSyntaxError(f"line {lineno}: multi-line records are not supported")
        tokens = body.split()
        if tokens[0].startswith("$"):
            if tokens[0].upper() == "$ORIGIN" and len(tokens) > 1:
                origin = tokens[1].lower().rstrip(".")
            continue
        if body[0] in " \t":
            if prev_owner is None:
                skipped += 1
                continue
            owner = prev_owner
        else:
            owner = _absolute(tokens.pop(0), origin)
            prev_owner = owner
        rtype = _record_type(tokens)
        if rtype != "ns":
            skipped += 1
            continue
        if owner == tld:
            # apex delegation of the TLD itself
            skipped += 1
            continue
        if not owner.endswith("." + tld):
            raise TldMismatch(f"line {lineno}: owner {owner!r} is not under .{tld}")
        try:
            domains.add(DomainName.parse(owner).registered)
        except InvalidDomain:
            skipped += 1
            continue
        ns_records += 1
    if ns_records == 0:
        raise EmptyZone(f"no NS delegations found for .{tld}")
    logger.debug("parsed .%s zone: %d domains, %d skipped lines", tld, len(domains), skipped)
    return ZoneSnapshot(date or dt.date.min, tld, frozenset(domains), ns_records, skipped)


def _absolute(owner: str, origin: str) -> str:
    owner = owner.lower()
    if owner == "@":
        return origin
    if owner.endswith("."):
        return owner.rstrip(".")
    return f"{owner}.{origin}" if origin else owner


def _record_type(tokens: list) -> Optional[str]:
    for tok in tokens:
        low = tok.lower()
        if low.isdigit() or low in RR_CLASSES:
            continue
        return low if low in RR_TYPES else None
    return None


def serialize_zone(snapshot: ZoneSnapshot, stream: TextIO, ttl: int = 86400) -> None:
    """Write one NS line per domain; nameserver targets are not retained."""
    stream.write(f"; zone .{snapshot.tld} {snapshot.date.isoformat()}\n")
    for domain in sorted(snapshot.domains):
        stream.write(f"{domain.raw}. {ttl} in ns ns1.{domain.raw}.\n")


def diff_zone_files(older: ZoneSnapshot, newer: ZoneSnapshot) -> ZoneDiff:
    if older.tld != newer.tld:
        raise TldMismatch(f".{older.tld} vs .{newer.tld}")
    if older.date >= newer.date:
        raise DateOrder(f"{older.date} is not before {newer.date}")
    return ZoneDiff(
        older.date,
        newer.date,
        added=newer.domains - older.domains,
        removed=older.domains - newer.domains,
    )


def write_diff(diff: ZoneDiff, added_stream: TextIO) -> str:
    """Write added domains one per line; returns the JSON summary text."""
    for domain in sorted(diff.added):
        added_stream.write(domain.raw + "\n")
    return json.dumps(diff.summary(), sort_keys=True)


DEFAULT_COLUMNS = {"date": "date", "malware": "malware", "host": "host"}


def parse_blacklist_feed(
    stream: Iterable[str], source: str, columns: Optional[Mapping[str, str]] = None
) -> FeedParse:
    """Parse a CSV IOC feed.

    ``columns`` maps the logical names ``date``, ``malware`` and ``host`` onto
    the feed's header names (matched case-insensitively). Invalid rows are
    skipped and listed in ``FeedParse.skipped``; duplicate
    (registered domain, date) pairs keep the first row.
    """
    mapping = {**DEFAULT_COLUMNS, **(columns or {})}
    reader = csv.reader(line for line in stream if not line.lstrip().startswith("#"))
    header = next(reader, None)
    if header is None:
        raise MissingColumns("feed has no header row")
    index = {name.strip().lower(): i for i, name in enumerate(header)}
    missing = [logical for logical, col in mapping.items() if col.lower() not in index]
    if missing:
        raise MissingColumns(f"feed lacks columns for {sorted(missing)}")
    di, mi, hi = (index[mapping[k].lower()] for k in ("date", "malware", "host"))

    result = FeedParse(entries=[])
    seen = set()
    for rowno, row in enumerate(reader, 2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            day = _parse_feed_date(row[di])
            family = row[mi].strip()
            host = row[hi].strip()
            if not family:
                raise ValueError("empty malware family")
            if _is_ip(host):
                raise ValueError("IP address IOC")
            domain = DomainName.parse(host)
        except (IndexError, ValueError) as exc:
            result.skipped.append((rowno, str(exc)))
            continue
        key = (domain.registered, day)
        if key in seen:
            continue
        seen.add(key)
        result.entries.append(BlacklistEntry(domain, day, family, source))
    if result.skipped:
        logger.info("%s: skipped %d feed rows", source, len(result.skipped))
    return result


def _parse_feed_date(text: str) -> dt.date:
    text = text.strip()
    try:
        return dt.date.fromisoformat(text[:10])
    except ValueError:
        raise ValueError(f"unparseable date {text!r}") from None


def _is_ip(host: str) -> bool:
    try:
        ipaddress.ip_address(host)
    except ValueError:
        return False
    return True


def detections_time_series(
    entries: Iterable[BlacklistEntry], family: str, start: dt.date, end: dt.date
) -> TimeSeries:
    """Daily count of distinct registered domains of ``family`` first seen each day.

    The range is inclusive; days without detections are zeros.
    """
    if end < start:
        raise EmptyRange(f"{start}..{end} is empty")
    n = (end - start).days + 1
    family = family.strip().lower()
    events = {
        (e.domain.registered, e.first_seen)
        for e in entries
        if e.malware_family.strip().lower() == family and start <= e.first_seen <= end
    }
    counts = np.zeros(n)
    for _, day in events:
        counts[(day - start).days] += 1
    return TimeSeries(start, counts, name=f"{family}_detections")
