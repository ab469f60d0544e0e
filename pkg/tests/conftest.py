import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from cifs_lab.geometry import TauParam  # noqa: E402

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# i, 1+i, 2i, 0.5+1.5i
AUDIT_TAUS = [TauParam(0, 1), TauParam(1, 1), TauParam(0, 2), TauParam(0.5, 1.5)]


@pytest.fixture(params=AUDIT_TAUS, ids=str)
def audit_tau(request):
    return request.param


@pytest.fixture
def tau_i():
    return TauParam(0, 1)


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if not acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(acceptance_log.RESULTS):
        terminalreporter.write_line(acceptance_log.line(k))
