import numpy as np
import pytest

from nse.config import get_settings
from nse.rng import RngSeed


@pytest.fixture
def seed() -> RngSeed:
    return RngSeed(20240601)


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Null tables are cached under a per-test directory; settings are re-read per test."""
    monkeypatch.setenv("NSE_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.delenv("NSE_WORKERS", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def xyz():
    return np.array([1.0, 2.0, 3.0]), np.array([2.0, 2.0, 2.0])
