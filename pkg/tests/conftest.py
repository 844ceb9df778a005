from __future__ import annotations

from pathlib import Path

import pytest

from motoguard.core import ControllerConfig

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def corpus_dir() -> Path:
    return REPO_ROOT / "scenarios"


@pytest.fixture
def cfg() -> ControllerConfig:
    return ControllerConfig()
