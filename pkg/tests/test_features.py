import datetime as dt
import io

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from ransomcast.domain_feed import DomainName
from ransomcast.features import (
    FULL_SCHEMA,
    STEP1_SCHEMA,
    Step1Features,
    Step2Features,
    encode,
    encode_domain,
    step1_features,
    step2_features,
    write_vectors_csv,
)
from ransomcast.whois import WhoisContact, WhoisRecord

D = dt.date
label = st.from_regex(r"[a-z0-9]([a-z0-9-]{0,14}[a-z0-9])?", fullmatch=True)


def test_step1_reference_domains():
    # "1cbcpy" repeats the "c", so it has 5 distinct characters, not 6
    assert step1_features(DomainName.parse("1cbcpy.top")) == Step1Features(6, True, False, 5, False, True)
    expected = Step1Features(6, True, False, 6, False, True)
    assert step1_features(DomainName.parse("hjhqmbxyinislkkt.17rm9b.top")) == expected


def test_step1_hyphen_case():
    assert step1_features(DomainName.parse("a-1.top")) == Step1Features(3, True, False, 3, True, False)


@given(label)
def test_step1_invariants(lbl):
    f = step1_features(DomainName.parse(f"{lbl}.top"))
    assert 1 <= f.distinct_chars <= f.length
    if f.digits_only:
        assert not f.has_letter and f.starts_with_digit


@given(st.integers(1, 40))
def test_distinct_chars_of_repeated_letter(n):
    assert step1_features(DomainName.parse("x" * n + ".top")).distinct_chars == 1


def test_step2_dates_and_org():
    reg = WhoisContact(name="Acme Corp Holdings", organization="acme  corp")
    rec = WhoisRecord(DomainName.parse("abc.top"), D(2017, 1, 10), D(2018, 1, 10), reg)
    f = step2_features(rec)
    assert f.registration_days == 365 and f.weekday == 1 and f.org_in_name


def test_step2_absent_contacts():
    f = step2_features(WhoisRecord(DomainName.parse("abc.top")))
    assert f == Step2Features(False, None, None, False, False)


def test_step2_fax_and_contacts():
    c = WhoisContact(name="A B", organization="A", email="a@x", telephone="+1.555-0100", fax="(1) 5550100")
    c2 = WhoisContact(name="a  b", organization="a", email="A@X", telephone="123")
    rec = WhoisRecord(DomainName.parse("abc.top"), registrant=c, admin=c2, tech=c)
    f = step2_features(rec)
    assert f.fax_equals_phone and f.contacts_all_equal
    rec2 = WhoisRecord(DomainName.parse("abc.top"), registrant=c, admin=c2)
    assert not step2_features(rec2).contacts_all_equal
    nofax = WhoisRecord(DomainName.parse("abc.top"), registrant=WhoisContact(name="x", telephone="1"))
    assert not step2_features(nofax).fax_equals_phone


def test_encode_lengths():
    s1 = step1_features(DomainName.parse("1cbcpy.top"))
    v = encode(s1)
    assert len(v.values) == 6 and v.schema == STEP1_SCHEMA
    full = encode(s1, Step2Features(True, 365, 1, True, True))
    assert len(full.values) == 19 and full.schema == FULL_SCHEMA
    assert full.values[FULL_SCHEMA.index("weekday_tue")] == 1.0
    assert full.values[FULL_SCHEMA.index("registration_days")] == 365.0
    missing = encode(s1, Step2Features(False, None, None, False, False))
    assert missing.values[FULL_SCHEMA.index("registration_days_present")] == 0.0
    assert missing.values[FULL_SCHEMA.index("weekday_present")] == 0.0
    assert not missing.values[FULL_SCHEMA.index("weekday_mon"):FULL_SCHEMA.index("weekday_present")].any()


def test_same_label_same_vector():
    a = encode_domain(DomainName.parse("x.abc123.top"))
    b = encode_domain(DomainName.parse("y.abc123.top"))
    assert a == b and a.values.tobytes() == b.values.tobytes()


step2_strategy = st.builds(
    Step2Features, st.booleans(), st.one_of(st.none(), st.integers(0, 4000)),
    st.one_of(st.none(), st.integers(0, 6)), st.booleans(), st.booleans(),
)
step1_strategy = st.builds(
    Step1Features, st.integers(1, 63), st.booleans(), st.booleans(), st.integers(1, 36), st.booleans(), st.booleans()
)


@given(step1_strategy, step2_strategy, step1_strategy, step2_strategy)
def test_encoding_is_injective(a1, a2, b1, b2):
    same = encode(a1, a2) == encode(b1, b2)
    assert same == ((a1, a2) == (b1, b2))


def test_vectors_csv():
    buf = io.StringIO()
    write_vectors_csv([encode_domain(DomainName.parse("1cbcpy.top"))], buf)
    header, row = buf.getvalue().splitlines()
    assert header.split(",")[0] == "domain" and header.split(",")[1:] == list(STEP1_SCHEMA)
    assert row.startswith("1cbcpy.top,6")
    assert np.isclose(float(row.split(",")[-1]), 1.0)
