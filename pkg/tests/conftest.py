import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("eidlab", max_examples=40, deadline=None)
settings.load_profile("eidlab")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=1234))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import SUMMARY

    if SUMMARY:
        terminalreporter.section("acceptance criteria")
        for line in SUMMARY:
            terminalreporter.write_line(line)
