"""Name-structure (Step 1) and WHOIS (Step 2) features, plus their numeric encoding."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from typing import Iterable, Optional, TextIO

import numpy as np

from .domain_feed import DomainName
from .whois import WhoisRecord, fold

STEP1_SCHEMA = (
    "length",
    "has_letter",
    "digits_only",
    "distinct_chars",
    "has_hyphen",
    "starts_with_digit",
)
WEEKDAYS = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")
STEP2_SCHEMA = (
    ("org_in_name", "registration_days", "registration_days_present")
    + tuple(f"weekday_{d}" for d in WEEKDAYS)
    + ("weekday_present", "fax_equals_phone", "contacts_all_equal")
)
FULL_SCHEMA = STEP1_SCHEMA + STEP2_SCHEMA

_NON_DIGIT = re.compile(r"\D")


@dataclass(frozen=True)
class Step1Features:
    length: int
    has_letter: bool
    digits_only: bool
    distinct_chars: int
    has_hyphen: bool
    starts_with_digit: bool


@dataclass(frozen=True)
class Step2Features:
    org_in_name: bool
    registration_days: Optional[int]
    weekday: Optional[int]
    fax_equals_phone: bool
    contacts_all_equal: bool


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    schema: tuple
    domain: Optional[DomainName] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.schema),):
            raise ValueError("values and schema lengths differ")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "schema", tuple(self.schema))

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.schema == other.schema and self.values.tobytes() == other.values.tobytes()


def step1_features(domain: DomainName) -> Step1Features:
    """Features of the second-level label; third-level labels are attacker-chosen noise."""
    label = domain.second_level
    return Step1Features(
        length=len(label),
        has_letter=any(c.isalpha() for c in label),
        digits_only=label.isdigit(),
        distinct_chars=len(set(label)),
        has_hyphen="-" in label,
        starts_with_digit=label[:1].isdigit(),
    )


def _digits(text: Optional[str]) -> str:
    return _NON_DIGIT.sub("", text or "")


def step2_features(record: WhoisRecord) -> Step2Features:
    reg = record.registrant
    org_in_name = False
    fax_equals_phone = False
    if reg is not None:
        org, name = fold(reg.organization), fold(reg.name)
        org_in_name = bool(org) and name is not None and org in name
        phone, fax = _digits(reg.telephone), _digits(reg.fax)
        fax_equals_phone = bool(phone) and phone == fax

    contacts = (record.registrant, record.admin, record.tech)
    contacts_all_equal = all(c is not None for c in contacts) and all(
        contacts[0].same_as(c) for c in contacts[1:]
    )

    days = None
    if record.created is not None and record.expires is not None:
        days = (record.expires - record.created).days
    weekday = record.created.weekday() if record.created is not None else None
    return Step2Features(org_in_name, days, weekday, fax_equals_phone, contacts_all_equal)


def encode(step1: Step1Features, step2: Optional[Step2Features] = None, domain=None) -> FeatureVector:
    values = [
        float(step1.length),
        float(step1.has_letter),
        float(step1.digits_only),
        float(step1.distinct_chars),
        float(step1.has_hyphen),
        float(step1.starts_with_digit),
    ]
    if step2 is None:
        return FeatureVector(np.array(values), STEP1_SCHEMA, domain)
    values.append(float(step2.org_in_name))
    if step2.registration_days is None:
        values += [0.0, 0.0]
    else:
        values += [float(step2.registration_days), 1.0]
    onehot = [0.0] * 7
    if step2.weekday is not None:
        onehot[step2.weekday] = 1.0
    values += onehot + [float(step2.weekday is not None)]
    values += [float(step2.fax_equals_phone), float(step2.contacts_all_equal)]
    return FeatureVector(np.array(values), FULL_SCHEMA, domain)


def encode_domain(domain: DomainName, record: Optional[WhoisRecord] = None) -> FeatureVector:
    s2 = step2_features(record) if record is not None else None
    return encode(step1_features(domain), s2, domain)


def write_vectors_csv(vectors: Iterable[FeatureVector], stream: TextIO) -> None:
    writer = None
    for vec in vectors:
        if writer is None:
            writer = csv.writer(stream, lineterminator="\n")
            writer.writerow(("domain",) + vec.schema)
        writer.writerow([vec.domain.raw if vec.domain else ""] + [f"{v:g}" for v in vec.values])
