from fractions import Fraction

import pytest

from bequiset.workloads import gen_figure1


@pytest.fixture
def figure1():
    return gen_figure1()


F = Fraction


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
