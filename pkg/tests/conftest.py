import pytest

from lifeperiod.envmodel import example2
from lifeperiod.renewal import exact_series


@pytest.fixture(scope="session")
def example2_exact():
    """Rational enumeration of the two-atom preset through n = 10 (about 10 s)."""
    return exact_series(example2(), 10)
