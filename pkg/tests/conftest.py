from pathlib import Path

import pytest

from bichain.language import load_problems

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def squirrel_problem():
    """Ten facts, eight rules; the squirrel ends up blue at depth 4."""
    return load_problems(str(FIXTURES / "squirrel.pw"))[0]


@pytest.fixture(scope="session")
def cowbear_problem():
    """Eleven facts, nine rules; the cow ends up chasing the bear."""
    return load_problems(str(FIXTURES / "cowbear.pw"))[0]


@pytest.fixture(scope="session")
def fixture_paths():
    return str(FIXTURES / "squirrel.pw"), str(FIXTURES / "cowbear.pw")
