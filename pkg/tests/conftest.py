import sys
from pathlib import Path

import numpy as np
import pytest

from swinv import arbitrary, dwell
from swinv.fileio import load_system
from swinv.system import SwitchedAffineSystem

SYSTEMS = Path(__file__).resolve().parent.parent / "systems"


def shear_system() -> SwitchedAffineSystem:
    return load_system(SYSTEMS / "two_mode_shear.json")


def oscillator_system() -> SwitchedAffineSystem:
    return load_system(SYSTEMS / "oscillator_pair.json")


def three_mode_system() -> SwitchedAffineSystem:
    return load_system(SYSTEMS / "three_mode.json")


@pytest.fixture(scope="session")
def shear():
    return shear_system()


@pytest.fixture(scope="session")
def oscillator():
    return oscillator_system()


@pytest.fixture(scope="session")
def three_mode():
    return three_mode_system()


@pytest.fixture(scope="session")
def k_q(shear):
    return arbitrary.ellipsoid_invariant(shear, 0.4785)


@pytest.fixture(scope="session")
def k_sos(shear):
    return arbitrary.sos_invariant(shear, 12, 1.0, 1e-2)


@pytest.fixture(scope="session")
def dwell_certs(oscillator):
    return {tau: dwell.safety_radius(dwell.dwell_certificate(oscillator, tau)) for tau in (2.76, 5.0, 10.0)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k)):
        terminalreporter.write_line(results[key])
