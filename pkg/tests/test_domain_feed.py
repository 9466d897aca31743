import datetime as dt
import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ransomcast.domain_feed import (
    DomainName,
    ZoneSnapshot,
    detections_time_series,
    diff_zone_files,
    parse_blacklist_feed,
    parse_zone_file,
    serialize_zone,
    write_diff,
)
from ransomcast.errors import (
    DateOrder,
    EmptyRange,
    EmptyZone,
    InvalidDomain,
    MissingColumns,
    TldMismatch,
    ZoneSyntaxError,
)

from conftest import zone_text

D = dt.date
label = st.from_regex(r"[a-z0-9]([a-z0-9-]{0,8}[a-z0-9])?", fullmatch=True)


def snap(names, day, tld="top"):
    return ZoneSnapshot(day, tld, frozenset(DomainName.parse(n) for n in names), len(names))


# --- DomainName ---------------------------------------------------------------------


def test_domain_name_decomposition():
    d = DomainName.parse("P27DOKHPZ2N7NVGR.1cbcpy.top.")
    assert d.raw == "p27dokhpz2n7nvgr.1cbcpy.top"
    assert d.top_level == "top"
    assert d.second_level == "1cbcpy"
    assert d.third_level == "p27dokhpz2n7nvgr"
    assert d.registered.raw == "1cbcpy.top"
    assert d.registered.third_level is None


@pytest.mark.parametrize("bad", ["", "top", "-ab.top", "ab-.top", "a_b.top", "a..top", "exa mple.top"])
def test_domain_name_rejects_invalid(bad):
    with pytest.raises(InvalidDomain):
        DomainName.parse(bad)


@given(st.lists(label, min_size=2, max_size=4))
def test_labels_join_to_raw(labels):
    d = DomainName.parse(".".join(labels))
    assert ".".join(d.labels) == d.raw
    assert d.second_level and d.top_level


# --- zone files ------------------------------------------------------------------------


def test_parse_zone_worked_example():
    lines = ["1cbcpy.top. 86400 in ns ns1.example-dns.net.", "1cbcpy.top. 86400 in ns ns2.example-dns.net."]
    s = parse_zone_file(io.StringIO("\n".join(lines)), "top")
    assert {d.raw for d in s.domains} == {"1cbcpy.top"}
    assert s.record_count == 2


def test_parse_zone_empty():
    with pytest.raises(EmptyZone):
        parse_zone_file(io.StringIO(""), "top")


def test_parse_zone_five_owners():
    names = [f"d{i}x.top" for i in range(5)]
    s = parse_zone_file(zone_text(names), "top", D(2017, 3, 1))
    assert len(s.domains) == 5
    assert s.record_count == 10
    assert s.date == D(2017, 3, 1)


def test_parse_zone_origin_relative_and_other_types():
    text = "\n".join([
        "$ORIGIN top.",
        "abc 3600 IN NS ns1.x.net.",
        "    3600 IN NS ns2.x.net.",
        "abc 3600 IN A 192.0.2.1",
        "www.def 3600 in ns ns1.x.net.",
        "; comment",
        "garbage",
    ])
    s = parse_zone_file(io.StringIO(text), "TOP.")
    assert {d.raw for d in s.domains} == {"abc.top", "def.top"}
    assert s.skipped_count >= 1


def test_parse_zone_tld_mismatch():
    with pytest.raises(TldMismatch):
        parse_zone_file(io.StringIO("abc.xyz. 86400 in ns ns1.x.net.\n"), "top")


def test_parse_zone_rejects_continuations():
    with pytest.raises(ZoneSyntaxError):
        parse_zone_file(io.StringIO("abc.top. 86400 in ns (\n ns1.x.net. )\n"), "top")


@given(st.sets(label, min_size=1, max_size=15))
def test_zone_round_trip(labels):
    s = snap([f"{x}.top" for x in labels], D(2017, 1, 1))
    buf = io.StringIO()
    serialize_zone(s, buf)
    buf.seek(0)
    assert parse_zone_file(buf, "top", s.date).domains == s.domains


# --- diffs -------------------------------------------------------------------------------


def test_diff_example():
    d = diff_zone_files(snap(["a.top", "b.top"], D(2017, 1, 1)), snap(["b.top", "c.top"], D(2017, 1, 2)))
    assert {x.raw for x in d.added} == {"c.top"}
    assert {x.raw for x in d.removed} == {"a.top"}


def test_diff_identical_is_empty():
    d = diff_zone_files(snap(["a.top"], D(2017, 1, 1)), snap(["a.top"], D(2017, 1, 2)))
    assert not d.added and not d.removed


def test_diff_with_gap():
    base = [f"b{i}.top" for i in range(20)]
    new = [f"n{i}.top" for i in range(10)]
    d = diff_zone_files(snap(base, D(2017, 1, 1)), snap(base + new, D(2017, 1, 4)))
    assert len(d.added) == 10 and (d.to_date - d.from_date).days == 3


def test_diff_errors():
    a = snap(["a.top"], D(2017, 1, 2))
    with pytest.raises(DateOrder):
        diff_zone_files(a, snap(["a.top"], D(2017, 1, 2)))
    with pytest.raises(TldMismatch):
        diff_zone_files(a, snap(["a.xyz"], D(2017, 1, 3), tld="xyz"))


@given(st.sets(label, max_size=12), st.sets(label, max_size=12))
def test_diff_inversion_and_disjointness(a, b):
    A = snap([f"{x}.top" for x in a], D(2017, 1, 1))
    B = snap([f"{x}.top" for x in b], D(2017, 1, 2))
    fwd = diff_zone_files(A, B)
    B_earlier = ZoneSnapshot(D(2016, 12, 31), "top", B.domains, 0)
    back = diff_zone_files(B_earlier, A)
    assert fwd.added == back.removed and fwd.removed == back.added
    assert not (fwd.added & fwd.removed)
    assert fwd.added == B.domains - A.domains
    same = diff_zone_files(A, ZoneSnapshot(D(2017, 1, 5), "top", A.domains, 0))
    assert not same.added and not same.removed


def test_write_diff():
    d = diff_zone_files(snap(["a.top"], D(2017, 1, 1)), snap(["c.top", "b.top"], D(2017, 1, 2)))
    buf = io.StringIO()
    summary = write_diff(d, buf)
    assert buf.getvalue() == "b.top\nc.top\n"
    assert '"added_count": 2' in summary


# --- blacklist feeds ------------------------------------------------------------------------


def test_feed_reference_row():
    feed = io.StringIO("date,malware,host\n2017-02-02,Cerber,p27dokhpz2n7nvgr.1cbcpy.top\n")
    (e,) = parse_blacklist_feed(feed, "tracker").entries
    assert e.domain.registered.raw == "1cbcpy.top"
    assert e.domain.third_level == "p27dokhpz2n7nvgr"
    assert e.first_seen == D(2017, 2, 2) and e.malware_family == "Cerber"


def test_feed_skips_bad_rows_and_comments():
    feed = io.StringIO("# header comment\ndate,malware,host\nnot-a-date,Cerber,a1b2c3.top\n"
                       "2017-02-02,Cerber,10.0.0.1\n2017-02-03,Cerber,ok1234.top\n")
    parsed = parse_blacklist_feed(feed, "s")
    assert [e.domain.raw for e in parsed.entries] == ["ok1234.top"]
    assert len(parsed.skipped) == 2


def test_feed_duplicates_collapse():
    rows = ["2017-02-02,Cerber,x.aaa111.top", "2017-02-02,Cerber,y.aaa111.top",
            "2017-02-03,Cerber,aaa111.top", "2017-02-02,Cerber,bbb222.top"]
    parsed = parse_blacklist_feed(io.StringIO("date,malware,host\n" + "\n".join(rows)), "s")
    assert len(parsed.entries) == 3


def test_feed_column_mapping_and_missing():
    text = "Firstseen (UTC),Malware,Host,Threat\n2017-02-02 10:00:00,Cerber,abc123.top,C2\n"
    cols = {"date": "Firstseen (UTC)", "malware": "Malware", "host": "Host"}
    assert len(parse_blacklist_feed(io.StringIO(text), "abusech", cols).entries) == 1
    with pytest.raises(MissingColumns):
        parse_blacklist_feed(io.StringIO("date,host\n"), "s")


# --- detection series -----------------------------------------------------------------------


def _entries(rows):
    text = "date,malware,host\n" + "\n".join(f"{d},{m},{h}" for d, m, h in rows)
    return parse_blacklist_feed(io.StringIO(text), "s").entries


def test_series_three_on_one_day():
    es = _entries([("2017-01-03", "Cerber", f"d{i}abcd.top") for i in range(3)])
    s = detections_time_series(es, "Cerber", D(2017, 1, 1), D(2017, 1, 5))
    assert s.values.tolist() == [0, 0, 3, 0, 0]


def test_series_empty_and_errors():
    s = detections_time_series([], "Cerber", D(2017, 1, 1), D(2017, 1, 3))
    assert s.values.tolist() == [0, 0, 0]
    with pytest.raises(EmptyRange):
        detections_time_series([], "Cerber", D(2017, 1, 3), D(2017, 1, 1))


def test_series_hand_counted():
    rows = [
        ("2017-01-01", "Cerber", "a1.top"), ("2017-01-01", "Cerber", "a2.top"),
        ("2017-01-02", "Cerber", "b1.top"),
        ("2017-01-04", "Cerber", "c1.top"), ("2017-01-04", "Cerber", "x.c1.top"),  # duplicate registered
        ("2017-01-04", "Cerber", "c2.top"), ("2017-01-04", "Cerber", "y.c2.top"),  # duplicate registered
        ("2017-01-05", "Locky", "l1.top"),
        ("2017-01-07", "cerber", "e1.top"),
        ("2017-01-09", "Cerber", "late.top"),
    ]
    s = detections_time_series(_entries(rows), "Cerber", D(2017, 1, 1), D(2017, 1, 7))
    assert s.values.tolist() == [2, 1, 0, 2, 0, 0, 1]


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 5)), max_size=40))
def test_series_sum_counts_distinct_events(events):
    rows = [((D(2017, 1, 1) + dt.timedelta(days=day)).isoformat(), "Cerber", f"dom{k}.top") for day, k in events]
    es = _entries(rows)
    s = detections_time_series(es, "Cerber", D(2017, 1, 1), D(2017, 1, 8))
    expected = {(k, day) for day, k in events if day <= 7}
    assert s.values.sum() == len(expected)
