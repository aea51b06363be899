import re

import pytest

from remotable import LoopbackNetwork, Node

# Labels for the acceptance checks in test_acceptance.py, printed one per line
# at the end of a run so the result of each is visible at a glance.
ACCEPTANCE_LABELS = {
    1: "monad laws under get, loopback and TCP",
    2: "session reproduction: rendering, unforced handles, two-object false",
    3: "locality replacement: serialization counters 0 vs >=1",
    4: "serializability needed only at get, chains 1-10",
    5: "async equivalence and non-blocking composition",
    6: "deferred frame economy: 2 frames vs n+2",
    7: "protocol conformance and cross-process identical run",
}


@pytest.fixture
def loop_pair():
    """A server and a client node on a fresh in-process fabric."""
    network = LoopbackNetwork()
    server = Node.loopback(network)
    client = Node.loopback(network)
    yield server, client
    client.close()
    server.close()


@pytest.fixture
def tcp_pair():
    server = Node.tcp()
    client = Node.tcp()
    yield server, client
    client.close()
    server.close()


def _criterion_of(nodeid):
    if "test_acceptance.py" not in nodeid:
        return None
    match = re.search(r"test_criterion_(\d+)", nodeid)
    return int(match.group(1)) if match else None


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            number = _criterion_of(getattr(report, "nodeid", ""))
            if number is None:
                continue
            worst = outcomes.get(number, "passed")
            outcomes[number] = status if worst == "passed" else worst
    if not outcomes:
        return
    terminalreporter.write_line("")
    terminalreporter.write_line("acceptance criteria:")
    for number in sorted(outcomes):
        verdict = "PASS" if outcomes[number] == "passed" else "FAIL"
        label = ACCEPTANCE_LABELS.get(number, "?")
        terminalreporter.write_line(f"  criterion {number} ({label}): {verdict}")
