from __future__ import annotations

import time
from pathlib import Path

import pytest

from kcag.domain import load_organization
from kcag.pipeline import generate
from kcag.rules import builtin_ruleset, load_ruleset

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"
PHISHING = FIXTURES / "phishing" / "organization.yml"
SSH = FIXTURES / "ssh" / "organization.yml"
SSH_RULES = FIXTURES / "ssh" / "brute_force.rules"
NETWORK = FIXTURES / "network" / "organization.yml"

SUITE_BUDGET_SECONDS = 60.0

# criterion number -> (title, passed, detail), filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}
_started = time.perf_counter()


def record(number: int, title: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE[number] = (title, passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {title}: {detail}")
    return passed


def pytest_sessionfinish(session, exitstatus):
    elapsed = time.perf_counter() - _started
    session.config._kcag_elapsed = elapsed
    if elapsed > SUITE_BUDGET_SECONDS and exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    elapsed = getattr(config, "_kcag_elapsed", time.perf_counter() - _started)
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {title}: {detail}")
    verdict = "PASS" if elapsed <= SUITE_BUDGET_SECONDS else "FAIL"
    terminalreporter.write_line(f"suite runtime: {verdict} - {elapsed:.1f}s (budget {SUITE_BUDGET_SECONDS:.0f}s)")


@pytest.fixture(scope="session")
def builtin():
    return builtin_ruleset()


@pytest.fixture(scope="session")
def phishing_org():
    return load_organization(PHISHING)


@pytest.fixture(scope="session")
def phishing(phishing_org):
    return generate(phishing_org)


@pytest.fixture(scope="session")
def ssh_org():
    return load_organization(SSH)


@pytest.fixture(scope="session")
def ssh_rules():
    return load_ruleset(SSH_RULES)


@pytest.fixture(scope="session")
def ssh(ssh_org, ssh_rules):
    return generate(ssh_org, ssh_rules)


@pytest.fixture(scope="session")
def network_org():
    return load_organization(NETWORK)


@pytest.fixture(scope="session")
def network(network_org):
    return generate(network_org, phase_order="forbidden-pairs")
