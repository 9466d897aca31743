"""Synthetic corpora: Cerber-style and benign registrations, zone fixtures, AR/ARX series.

Cerber-style names follow the observed schema: a 16-character third-level
label, a 6-character second-level label starting with a digit, TLD ``top``.
Their WHOIS data carries the traces of scripted registration (organization
copied into the registrant name, fax equal to phone, identical contacts,
one-year terms, a handful of registration weekdays).
"""
from __future__ import annotations

import csv
import datetime as dt
import json
import string
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .domain_feed import DomainName
from .forecasting.series import TimeSeries
from .whois import WhoisContact, WhoisRecord

ALNUM = string.ascii_lowercase + string.digits
SYLLABLES = [
    "an", "bar", "co", "del", "el", "fin", "go", "har", "in", "jo", "ka", "lo", "ma",
    "net", "or", "pa", "qui", "ro", "sun", "ta", "ul", "ver", "web", "xo", "yu", "zen",
    "shop", "tech", "blog", "home", "cloud", "data", "art", "food", "book", "life",
]
FIRST = ["anna", "ben", "chen", "dana", "emil", "fatima", "george", "hana", "ivan", "julia", "kofi", "lena"]
LAST = ["smith", "garcia", "wang", "muller", "rossi", "kim", "novak", "silva", "ito", "brown"]
ORGS = ["Acme", "Blue Sky", "Northwind", "Globex", "Initech", "Umbrella", "Stark", "Wayne", "Hooli"]


def _rand(rng, alphabet, n):
    return "".join(rng.choice(list(alphabet), size=n))


def cerber_name(rng: np.random.Generator, tld: str = "top") -> DomainName:
    second = rng.choice(list("123456789")) + _rand(rng, ALNUM, 5)
    third = _rand(rng, ALNUM, 16)
    return DomainName.parse(f"{third}.{second}.{tld}")


def benign_name(rng: np.random.Generator, tld: str = "top") -> DomainName:
    kind = rng.random()
    if kind < 0.04:
        # random-looking 6-character names that collide with the Cerber schema
        label = rng.choice(list("123456789")) + _rand(rng, ALNUM, 5)
    elif kind < 0.10:
        label = _rand(rng, string.digits, int(rng.integers(3, 9)))
    else:
        parts = [rng.choice(SYLLABLES) for _ in range(int(rng.integers(2, 5)))]
        sep = "-" if rng.random() < 0.2 else ""
        label = sep.join(parts)
        if rng.random() < 0.15:
            label += str(int(rng.integers(1, 100)))
    return DomainName.parse(f"{label}.{tld}")


def _phone(rng):
    return "+1." + _rand(rng, string.digits, 10)


def cerber_whois(domain: DomainName, created: dt.date, rng: np.random.Generator) -> WhoisRecord:
    if rng.random() < 0.12:
        return benign_whois(domain, created, rng)
    org = f"{rng.choice(FIRST).title()} {rng.choice(LAST).title()}"
    name = f"{org} Ltd" if rng.random() < 0.5 else org
    phone = _phone(rng)
    email = f"{org.split()[0].lower()}@{rng.choice(['mail.ru', 'yandex.com', 'qq.com'])}"
    contact = WhoisContact(name=name, organization=org, email=email, telephone=phone, fax=phone)
    return WhoisRecord(domain.registered, created, created + dt.timedelta(days=365), contact, contact, contact)


def benign_whois(domain: DomainName, created: dt.date, rng: np.random.Generator) -> WhoisRecord:
    person = f"{rng.choice(FIRST).title()} {rng.choice(LAST).title()}"
    org = f"{rng.choice(ORGS)} {rng.choice(['Inc', 'GmbH', 'LLC', 'Media'])}"
    if rng.random() < 0.08:
        person = f"{org} Team"
    phone = _phone(rng)
    fax = phone if rng.random() < 0.05 else (_phone(rng) if rng.random() < 0.3 else None)
    reg = WhoisContact(name=person, organization=org, email=f"info@{domain.registered.raw}", telephone=phone, fax=fax)
    if rng.random() < 0.3:
        admin = tech = reg
    else:
        admin = WhoisContact(name=f"{rng.choice(FIRST).title()} {rng.choice(LAST).title()}", organization=org)
        tech = WhoisContact(name="Hostmaster", organization=rng.choice(ORGS), email="hostmaster@example.net")
    years = int(rng.choice([1, 1, 2, 3, 5, 10]))
    expires = created.replace(year=created.year + years) if not (created.month == 2 and created.day == 29) else (
        created + dt.timedelta(days=365 * years)
    )
    return WhoisRecord(domain.registered, created, expires, reg, admin, tech)


def cerber_created(rng: np.random.Generator, base: dt.date) -> dt.date:
    # scripted bulk registrations cluster on a few weekdays
    day = base + dt.timedelta(days=int(rng.integers(0, 120)))
    shift = (int(rng.choice([1, 1, 1, 2, 4])) - day.weekday()) % 7
    return day + dt.timedelta(days=shift)


def make_corpus(n_malicious: int = 1000, n_benign: int = 1000, seed: int = 0, tld: str = "top"):
    """List of ``(DomainName, WhoisRecord, label)`` with label 1 for Cerber-style rows."""
    rng = np.random.default_rng(seed)
    base = dt.date(2016, 8, 1)
    rows = []
    seen = set()
    while len(rows) < n_malicious:
        d = cerber_name(rng, tld)
        if d.registered in seen:
            continue
        seen.add(d.registered)
        rows.append((d, cerber_whois(d, cerber_created(rng, base), rng), 1))
    while len(rows) < n_malicious + n_benign:
        d = benign_name(rng, tld)
        if d.registered in seen:
            continue
        seen.add(d.registered)
        created = base + dt.timedelta(days=int(rng.integers(0, 300)))
        rows.append((d, benign_whois(d, created, rng), 0))
    return rows


# --- end-to-end fixture ---------------------------------------------------------


@dataclass
class Fixture:
    root: Path
    config_path: Path
    planted: list
    known: list
    benign: list


def write_fixture(
    root,
    seed: int = 0,
    n_background: int = 200,
    n_planted: int = 10,
    n_known: int = 80,
    n_benign: int = 120,
    dates=(dt.date(2017, 3, 1), dt.date(2017, 3, 2), dt.date(2017, 3, 5)),
) -> Fixture:
    """Write zone snapshots, feeds, benign list, WHOIS fixtures and a config file.

    ``n_planted`` Cerber-style domains are registered in the later snapshots
    and half of them show up in the "later" blacklist feed used by ``verify``.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    for sub in ("zones", "whois", "feeds"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    seen = set()

    def fresh(maker):
        while True:
            d = maker(rng)
            if d.registered not in seen:
                seen.add(d.registered)
                return d

    background = [fresh(benign_name).registered for _ in range(n_background)]
    planted = [fresh(cerber_name) for _ in range(n_planted)]
    known = [fresh(cerber_name) for _ in range(n_known)]
    benign = [fresh(benign_name).registered for _ in range(n_benign)]

    # snapshot k holds the background plus the planted domains registered so far
    n_first = len(background) // 2
    zone_sets = [
        background[:n_first],
        background[: n_first + (len(background) - n_first) // 2] + [p.registered for p in planted[: n_planted // 2]],
        background + [p.registered for p in planted],
    ]
    for day, domains in zip(dates, zone_sets):
        with open(root / "zones" / f"top-{day.isoformat()}.zone", "w") as fh:
            fh.write("$ORIGIN top.\n$TTL 86400\n")
            fh.write("top. 86400 in soa a.nic.top. hostmaster.top. 1 2 3 4 5\ntop. 86400 in ns a.nic.top.\n")
            for d in sorted(domains):
                fh.write(f"{d.raw}. 86400 in ns ns1.dnspod.net.\n{d.raw}. 86400 in ns ns2.dnspod.net.\n")

    registered_on = {}
    for i, p in enumerate(planted):
        registered_on[p.registered] = dates[1] if i < n_planted // 2 else dates[2]
    for d in known:
        registered_on[d.registered] = cerber_created(rng, dt.date(2016, 10, 1))
    for d in background + benign:
        registered_on[d.registered] = dt.date(2016, 1, 1) + dt.timedelta(days=int(rng.integers(0, 400)))

    def dump(record: WhoisRecord):
        (root / "whois" / f"{record.domain.raw}.json").write_text(
            json.dumps(record.to_document(), sort_keys=True, indent=1)
        )

    for d in planted + known:
        rec = cerber_whois(d, registered_on[d.registered], rng)
        # planted domains always carry the scripted pattern
        if d in planted:
            while not (rec.registrant and rec.registrant.fax):
                rec = cerber_whois(d, registered_on[d.registered], rng)
        dump(rec)
    for d in background + benign:
        dump(benign_whois(d, registered_on[d.registered], rng))

    def feed(path, rows):
        with open(path, "w", newline="") as fh:
            fh.write("# synthetic IOC feed\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "malware", "host"])
            w.writerows(rows)

    known_rows = [
        ((registered_on[d.registered] + dt.timedelta(days=int(rng.integers(5, 40)))).isoformat(), "Cerber", d.raw)
        for d in known
    ]
    known_rows.sort()
    feed(root / "feeds" / "known.csv", known_rows)
    later_rows = known_rows + [
        ((registered_on[p.registered] + dt.timedelta(days=10 + 3 * i)).isoformat(), "Cerber", p.raw)
        for i, p in enumerate(planted[::2])
    ]
    feed(root / "feeds" / "later.csv", later_rows)
    (root / "benign.txt").write_text("".join(d.raw + "\n" for d in benign))

    config = {
        "family": "Cerber",
        "seed": seed,
        "paths": {
            "zone_dir": "zones",
            "tld": "top",
            "blacklist_feeds": [{"path": "feeds/known.csv", "source": "synthetic"}],
            "benign_domains": "benign.txt",
            "whois_fixtures": "whois",
            "whois_cache": "cache",
            "later_feed": "feeds/later.csv",
            "out_dir": "out",
        },
        "classifier": {"whois_budget": 10000},
        "forecast": {"grid": {"max_p": 2, "max_d": 1, "max_q": 2}, "horizon": 7},
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True))
    return Fixture(root, config_path, planted, known, benign)


# --- series ------------------------------------------------------------------------


def simulate_arx(
    T: int,
    ar: float = 0.5,
    gamma: float = 2.0,
    seed: int = 0,
    x_mean: float = 5.0,
    x_scale: float = 2.0,
    x_ar: float = 0.6,
    noise: float = 1.0,
    burn: int = 200,
    start: dt.date = dt.date(2016, 8, 30),
) -> tuple[TimeSeries, TimeSeries]:
    """y_t = ar * y_{t-1} + gamma * x_t + e_t with an autocorrelated, non-negative x."""
    rng = np.random.default_rng(seed)
    n = T + burn
    x = np.empty(n)
    x[0] = x_mean
    for t in range(1, n):
        x[t] = x_mean + x_ar * (x[t - 1] - x_mean) + x_scale * np.sqrt(1 - x_ar**2) * rng.normal()
    x = np.maximum(x, 0.0)
    y = np.empty(n)
    y[0] = gamma * x_mean / (1 - ar)
    for t in range(1, n):
        y[t] = ar * y[t - 1] + gamma * x[t] + noise * rng.normal()
    y = np.maximum(y, 0.0)
    return TimeSeries(start, y[burn:], "target"), TimeSeries(start, x[burn:], "exog")


def simulate_ar1(T: int, phi: float = 0.6, sigma: float = 1.0, seed: int = 0, burn: int = 200) -> np.ndarray:
    rng = np.random.default_rng(seed)
    e = rng.normal(0.0, sigma, T + burn)
    y = np.zeros(T + burn)
    for t in range(1, T + burn):
        y[t] = phi * y[t - 1] + e[t]
    return y[burn:]
