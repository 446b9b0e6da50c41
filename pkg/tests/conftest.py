import json
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "oracles" / "fixtures.json"


@pytest.fixture(scope="session")
def oracle():
    return json.loads(FIXTURES.read_text())
