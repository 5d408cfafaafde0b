import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from drccp.solve import ClarabelAdapter, HighsAdapter


@pytest.fixture(scope="session")
def clarabel():
    return ClarabelAdapter()


@pytest.fixture(scope="session")
def highs():
    return HighsAdapter()


GOLDEN_DIR = Path(__file__).parent / "golden"
