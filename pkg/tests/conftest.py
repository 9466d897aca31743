import io

import pytest
from hypothesis import settings

from ransomcast.synthetic import make_corpus, write_fixture

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def zone_text(domains, tld="top", ns_per_domain=2):
    lines = [f"$ORIGIN {tld}.", "$TTL 86400", f"{tld}. 86400 in soa a.nic.{tld}. h.{tld}. 1 2 3 4 5"]
    for d in domains:
        for i in range(ns_per_domain):
            lines.append(f"{d}. 86400 in ns ns{i + 1}.example-dns.net.")
    return io.StringIO("\n".join(lines) + "\n")


@pytest.fixture(scope="session")
def corpus():
    return make_corpus(1000, 1000, seed=7)


@pytest.fixture(scope="session")
def pipeline_fixture(tmp_path_factory):
    return write_fixture(tmp_path_factory.mktemp("fixture"), seed=3)




# Acceptance results, printed once at the end of the run.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
