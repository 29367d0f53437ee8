import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def corpus():
    from corpus import build_corpus

    return build_corpus()


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES
