import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))


@pytest.fixture(autouse=True)
def _isolated_environment(monkeypatch):
    for name in ("SUPERRES_SEED", "SUPERRES_TRIALS", "SUPERRES_WORKERS", "SUPERRES_ENUM_CAP",
                 "SUPERRES_LOG_LEVEL", "SUPERRES_LOG_FILE"):
        monkeypatch.delenv(name, raising=False)
