import numpy as np
import pytest
from hypothesis import settings

from irsmec.experiments import draw_instance, parse_scheme, scheme_phases
from irsmec.scenario import ScenarioConfig

settings.register_profile("repro", derandomize=True, deadline=None, max_examples=200)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def default_cfg():
    return ScenarioConfig()


def inverse_gains(cfg, seed, scheme="greedy_irs"):
    """b for the instance drawn from ``seed`` under the phases of ``scheme``."""
    _, ch = draw_instance(cfg, seed)
    return scheme_phases(parse_scheme(scheme), cfg, ch)[1]


def random_b(rng, n, lo=-3.5, hi=-1.5):
    return 10.0 ** rng.uniform(lo, hi, n)


#: (criterion, passed, detail) recorded by the acceptance suite
ACCEPTANCE = []


def record_acceptance(criterion: int, passed: bool, detail: str) -> str:
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append((criterion, passed, line))
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
