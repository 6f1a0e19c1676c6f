import json
from pathlib import Path

import numpy as np
import pytest

from vsrgan.tensor_core import set_deterministic

ROOT = Path(__file__).resolve().parent.parent
DESK_CONFIG = ROOT / "configs" / "desk.json"

# Acceptance outcomes, keyed by criterion number, filled in by test_acceptance.
ACCEPTANCE = {}


@pytest.fixture(autouse=True, scope="session")
def _deterministic():
    set_deterministic(True)
    yield
    set_deterministic(False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def desk_config_dict():
    return json.loads(DESK_CONFIG.read_text())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[number]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:2d}. {name}: {detail}")
