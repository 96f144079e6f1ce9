import numpy as np
import pytest
from hypothesis import settings

from ingrasp.fixtures import load_fixture_grasp, load_fixture_hand, load_regression_goals

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def hand():
    return load_fixture_hand()


@pytest.fixture(scope="session")
def grasp():
    return load_fixture_grasp()


@pytest.fixture(scope="session")
def goals():
    return load_regression_goals()


def one_joint_doc(axis=(0.0, 0.0, 1.0), lower=-3.0, upper=3.0):
    """Single finger: one revolute joint at the palm, tip 5 cm along local x."""
    return {
        "name": "one",
        "fingers": [{
            "name": "f",
            "joints": [{"name": "j0", "origin_xyz": [0, 0, 0], "origin_rpy": [0, 0, 0],
                        "axis": list(axis), "limit_lower": lower, "limit_upper": upper}],
            "tip_xyz": [0.05, 0, 0],
            "tip_rpy": [0, 0, 0],
        }],
    }


def random_config(hand, rng):
    return rng.uniform(hand.lower, hand.upper)


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    """Store the one-line verdict of an acceptance criterion for the end-of-run summary."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
