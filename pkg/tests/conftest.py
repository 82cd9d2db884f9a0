import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ltgs.lp import certificate
from ltgs.lp.simplex import add_observer, remove_observer

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("ci", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

GAP_TOL = 1e-6


class SolveAudit:
    """Duality-gap and residual bookkeeping over every optimal LP solve."""

    def __init__(self):
        self.solves = 0
        self.worst_gap = 0.0
        self.worst_primal = 0.0
        self.failures = []

    def __call__(self, lp, sol):
        if not sol.optimal or sol.duals is None:
            return
        cert = certificate(lp, sol)
        self.solves += 1
        self.worst_gap = max(self.worst_gap, cert["duality_gap"])
        self.worst_primal = max(self.worst_primal, cert["primal_residual"])
        if cert["duality_gap"] > GAP_TOL and len(self.failures) < 5:
            self.failures.append(cert)


AUDIT = SolveAudit()


@pytest.fixture(autouse=True)
def audit_solves():
    """Every optimal solve made by a test must close its duality gap."""
    local = SolveAudit()

    def both(lp, sol):
        local(lp, sol)
        AUDIT(lp, sol)

    add_observer(both)
    yield local
    remove_observer(both)
    assert not local.failures, f"duality gap above {GAP_TOL}: {local.failures}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = []  # one "criterion ... PASS/FAIL ..." line per acceptance check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
    if AUDIT.solves:
        ok = AUDIT.worst_gap <= GAP_TOL
        terminalreporter.section("duality gap audit")
        terminalreporter.write_line(
            f"criterion 4 (gap) {'PASS' if ok else 'FAIL'}: {AUDIT.solves} optimal solves, "
            f"worst relative gap {AUDIT.worst_gap:.2e}, worst primal residual {AUDIT.worst_primal:.2e}")
