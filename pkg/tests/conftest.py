import pytest
from hypothesis import HealthCheck, settings

from folia import dsl

settings.register_profile("folia", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("folia")


def module(*gens, vars="x", ambient="tangent"):
    body = "".join(f"  - {g}\n" for g in gens)
    return dsl.parse(f"vars: {vars}\nambient: {ambient}\ngenerators:\n{body}")


@pytest.fixture
def mod():
    return module


ACCEPTANCE: list[tuple[int, str, bool]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, desc, ok in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {desc}")
