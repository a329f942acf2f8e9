import pytest

RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record ``(passed, detail)`` for an acceptance criterion named by the test's marker."""
    number = request.node.get_closest_marker('criterion').args[0]
    RESULTS[number] = (False, 'did not complete')

    def record(passed, detail):
        RESULTS[number] = (bool(passed), detail)
        return passed
    return record


def pytest_configure(config):
    config.addinivalue_line('markers', 'criterion(n): acceptance criterion number')


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section('acceptance criteria')
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line('criterion %d: %s  %s' % (n, 'PASS' if ok else 'FAIL', detail))
