"""WHOIS records from vendor-parsed fixtures, with a budgeted, cache-backed lookup.

The live vendor is abstracted behind :class:`LookupClient`; the package ships
a fixture-directory client that behaves like a remote service for tests and
offline replays.
"""
from __future__ import annotations

import datetime as dt
import json
import logging
import os
import re
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Protocol

from .domain_feed import DomainName
from .errors import BudgetExhausted, InvalidDate, LookupFailed, SchemaUnknown

logger = logging.getLogger(__name__)

SCHEMA_VERSIONS = {"1"}
CURRENT_SCHEMA = "1"
CONTACT_FIELDS = ("name", "organization", "email", "telephone", "fax")
CACHE_ENV = "RANSOMCAST_WHOIS_CACHE"

_DATETIME_Z = re.compile(r"^(\d{4}-\d{2}-\d{2})T\d{2}:\d{2}:\d{2}Z$")


@dataclass(frozen=True)
class WhoisContact:
    name: Optional[str] = None
    organization: Optional[str] = None
    email: Optional[str] = None
    telephone: Optional[str] = None
    fax: Optional[str] = None

    @property
    def known(self) -> bool:
        return any(getattr(self, f) is not None for f in CONTACT_FIELDS)

    def same_as(self, other: "WhoisContact", fields=("name", "organization", "email")) -> bool:
        """Field-wise equality ignoring case and whitespace runs."""
        return all(fold(getattr(self, f)) == fold(getattr(other, f)) for f in fields)

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in CONTACT_FIELDS if getattr(self, f) is not None}


def fold(text: Optional[str]) -> Optional[str]:
    if text is None:
        return None
    return " ".join(text.split()).casefold()


@dataclass(frozen=True)
class WhoisRecord:
    domain: DomainName
    created: Optional[dt.date] = None
    expires: Optional[dt.date] = None
    registrant: Optional[WhoisContact] = None
    admin: Optional[WhoisContact] = None
    tech: Optional[WhoisContact] = None
    fetched_at: Optional[dt.datetime] = None
    source: str = "fixture"

    def __post_init__(self):
        if self.created and self.expires and self.created > self.expires:
            raise InvalidDate(f"{self.domain}: created {self.created} after expires {self.expires}")
        if self.source not in ("fixture", "cache", "live"):
            raise ValueError(f"unknown record source {self.source!r}")

    def to_document(self) -> dict:
        doc: dict[str, Any] = {"schema": CURRENT_SCHEMA, "domain": self.domain.raw}
        if self.created:
            doc["created"] = self.created.isoformat()
        if self.expires:
            doc["expires"] = self.expires.isoformat()
        for role in ("registrant", "admin", "tech"):
            contact = getattr(self, role)
            if contact is not None:
                doc[role] = contact.to_dict()
        return doc


def _parse_date(value: Any, field_name: str) -> Optional[dt.date]:
    if value is None:
        return None
    if not isinstance(value, str):
        raise InvalidDate(f"{field_name}: expected a string, got {value!r}")
    text = value.strip()
    m = _DATETIME_Z.match(text)
    try:
        return dt.date.fromisoformat(m.group(1) if m else text)
    except ValueError:
        raise InvalidDate(f"{field_name}: unparseable date {value!r}") from None


def _parse_contact(doc: Any) -> Optional[WhoisContact]:
    if not isinstance(doc, Mapping):
        return None
    values = {}
    for f in CONTACT_FIELDS:
        v = doc.get(f)
        if isinstance(v, str) and v.strip():
            values[f] = v.strip()
    contact = WhoisContact(**values)
    return contact if contact.known else None


def parse_whois_fixture(
    doc: Mapping[str, Any], source: str = "fixture", fetched_at: Optional[dt.datetime] = None
) -> WhoisRecord:
    """Map a vendor-normalized WHOIS document onto a :class:`WhoisRecord`.

    Empty strings and empty contact blocks become ``None``; unknown keys are
    ignored.
    """
    version = str(doc.get("schema", ""))
    if version not in SCHEMA_VERSIONS:
        raise SchemaUnknown(f"unrecognized WHOIS schema tag {doc.get('schema')!r}")
    if "domain" not in doc:
        raise SchemaUnknown("WHOIS document lacks a domain field")
    return WhoisRecord(
        domain=DomainName.parse(doc["domain"]),
        created=_parse_date(doc.get("created"), "created"),
        expires=_parse_date(doc.get("expires"), "expires"),
        registrant=_parse_contact(doc.get("registrant")),
        admin=_parse_contact(doc.get("admin")),
        tech=_parse_contact(doc.get("tech")),
        fetched_at=fetched_at,
        source=source,
    )


@dataclass
class LookupBudget:
    """Daily request allowance; ``consume`` is atomic across threads."""

    max_requests_per_day: int
    requests_used: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if self.max_requests_per_day < 0:
            raise ValueError("max_requests_per_day must be non-negative")
        if not 0 <= self.requests_used <= self.max_requests_per_day:
            raise ValueError("requests_used out of range")

    @property
    def remaining(self) -> int:
        return self.max_requests_per_day - self.requests_used

    def consume(self) -> bool:
        with self._lock:
            if self.requests_used >= self.max_requests_per_day:
                return False
            self.requests_used += 1
            return True


class LookupClient(Protocol):
    def fetch(self, domain: DomainName) -> Optional[Mapping[str, Any]]:
        """Return the raw WHOIS document, or None if the vendor has no record."""


class FixtureClient:
    """Serves ``<dir>/<domain>.json`` documents as if they came from a vendor."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.calls = 0

    def fetch(self, domain: DomainName) -> Optional[Mapping[str, Any]]:
        self.calls += 1
        path = self.directory / f"{cache_filename(domain)}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))


def cache_filename(domain: DomainName) -> str:
    return domain.raw.encode("idna").decode("ascii")


class WhoisCache:
    """Directory store keyed by (domain, schema version). Writes are serialized."""

    def __init__(self, directory, schema_version: str = CURRENT_SCHEMA):
        self.root = Path(directory)
        self.schema_version = schema_version
        self._lock = threading.Lock()

    @classmethod
    def from_env(cls, default) -> "WhoisCache":
        return cls(os.environ.get(CACHE_ENV) or default)

    def _path(self, domain: DomainName) -> Path:
        return self.root / f"v{self.schema_version}" / f"{cache_filename(domain)}.json"

    def get(self, domain: DomainName) -> Optional[WhoisRecord]:
        path = self._path(domain)
        if not path.exists():
            return None
        return parse_whois_fixture(json.loads(path.read_text(encoding="utf-8")), source="cache")

    def put(self, record: WhoisRecord) -> None:
        path = self._path(record.domain)
        text = json.dumps(record.to_document(), sort_keys=True, indent=1)
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
            os.replace(tmp, path)


@dataclass(frozen=True)
class LookupOutcome:
    domain: DomainName
    record: Optional[WhoisRecord]
    error: Optional[str] = None

    def __iter__(self):
        # unpacks as (domain, record)
        return iter((self.domain, self.record))


def lookup_batch(
    domains: Iterable[DomainName],
    client: Optional[LookupClient],
    cache: Optional[WhoisCache],
    budget: LookupBudget,
    now: Optional[dt.datetime] = None,
) -> list[LookupOutcome]:
    """Resolve WHOIS for each domain, cache first, live calls charged to ``budget``.

    Never raises for a single domain: failures come back as outcomes with
    ``record=None`` and an error code such as ``"BudgetExhausted"``.
    """
    out = []
    for domain in domains:
        key = domain.registered
        cached = cache.get(key) if cache is not None else None
        if cached is not None:
            out.append(LookupOutcome(domain, cached))
            continue
        if client is None:
            out.append(LookupOutcome(domain, None, LookupFailed.__name__))
            continue
        if not budget.consume():
            out.append(LookupOutcome(domain, None, BudgetExhausted.__name__))
            continue
        try:
            doc = client.fetch(key)
            if doc is None:
                out.append(LookupOutcome(domain, None, LookupFailed.__name__))
                continue
            record = parse_whois_fixture(doc, source="live", fetched_at=now)
        except (SchemaUnknown, InvalidDate, ValueError, OSError) as exc:
            logger.warning("whois lookup for %s failed: %s", key, exc)
            out.append(LookupOutcome(domain, None, type(exc).__name__))
            continue
        if cache is not None:
            cache.put(record)
        out.append(LookupOutcome(domain, record))
    return out
